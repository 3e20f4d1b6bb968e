//! Paint-film color model: particle optics, Kubelka-Munk reflectance with a
//! Saunderson surface correction, tristimulus integration and CIELAB.

pub mod cmf;
pub mod km;
pub mod lab;
pub mod optics;
pub mod paint;

pub use cmf::{load_cmf, xyz_from_spectrum, CmfTable};
pub use km::{km_reflectance, saunderson, SaundersonParams};
pub use lab::{lab_from_xyz, Lab, WhitePoint};
pub use optics::{surrogate_optics, Optics, OpticsSample, SurrogateOptics};
pub use paint::{paint_objective, PaintObjective};

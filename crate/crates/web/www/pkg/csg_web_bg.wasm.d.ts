/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const csg_trace: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const paint_color: (a: number, b: number) => [number, number, number, number];
export const voronoi_owners: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const voronoi_weights: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;

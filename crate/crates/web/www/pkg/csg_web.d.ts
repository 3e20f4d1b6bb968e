/* tslint:disable */
/* eslint-disable */

export function csg_trace(radius: number, thickness: number, iterations: number, seed: number): Float64Array;

export function paint_color(radius: number, thickness: number): Float64Array;

export function voronoi_owners(points: Float64Array, offsets: Float64Array, resolution: number): Uint32Array;

export function voronoi_weights(points: Float64Array, offsets: Float64Array, resolution: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly csg_trace: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly paint_color: (a: number, b: number) => [number, number, number, number];
    readonly voronoi_owners: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly voronoi_weights: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;

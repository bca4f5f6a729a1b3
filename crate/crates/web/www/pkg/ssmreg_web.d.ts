/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    modeCount(): number;
    /**
     * Standard deviations of the modes: norms over the stacked vertex vector (mm).
     */
    modeSds(): Float64Array;
    /**
     * Generates `n_shapes` cavities and builds the model from all but the first.
     */
    constructor(seed: number, n_shapes: number);
    /**
     * Samples the held-out shape as seen from its opening, adds noise and a
     * random pose offset, registers with `n_modes` modes and returns a JSON
     * report.
     */
    register(n_modes: number, n_points: number, seed: number): string;
    /**
     * Vertices of the model instance for shape parameters `s` (in SDs), flattened xyz.
     */
    shape(s: Float64Array): Float64Array;
    /**
     * Triangle corner indices, flattened.
     */
    triangles(): Uint32Array;
}

/**
 * `x` with `P(chi2_k <= x) = p`.
 */
export function chi2Inv(p: number, k: number): number;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly chi2Inv: (a: number, b: number) => [number, number, number];
    readonly demo_modeCount: (a: number) => number;
    readonly demo_modeSds: (a: number) => [number, number];
    readonly demo_new: (a: number, b: number) => [number, number, number];
    readonly demo_register: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_shape: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_triangles: (a: number) => [number, number];
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

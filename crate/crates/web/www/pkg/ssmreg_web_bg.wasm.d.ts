/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const chi2Inv: (a: number, b: number) => [number, number, number];
export const demo_modeCount: (a: number) => number;
export const demo_modeSds: (a: number) => [number, number];
export const demo_new: (a: number, b: number) => [number, number, number];
export const demo_register: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_shape: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_triangles: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;

/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_completiondemo_free: (a: number, b: number) => void;
export const completiondemo_iteration: (a: number) => number;
export const completiondemo_new: (a: number, b: number, c: number, d: number, e: bigint, f: number) => [number, number, number];
export const completiondemo_size: (a: number) => number;
export const completiondemo_slice: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const completiondemo_step: (a: number, b: number) => [number, number, number, number];
export const prox_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
export const similarity_matrix: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;

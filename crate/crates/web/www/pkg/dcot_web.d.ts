/* tslint:disable */
/* eslint-disable */

/**
 * A planted `size × size × 4` completion problem and a solver that can be
 * advanced a few sweeps at a time. Mode 1 indexes subjects in four
 * contiguous groups that differ only through the tied core; `rank` applies
 * to mode 2.
 */
export class CompletionDemo {
    free(): void;
    [Symbol.dispose](): void;
    iteration(): number;
    constructor(size: number, rank: number, missing: number, noise: number, seed: bigint, smoothed: boolean);
    size(): number;
    /**
     * Frontal slice `k` (row-major) of `"truth"`, `"observed"` (missing
     * cells are `NaN`) or `"estimate"`.
     */
    slice(which: string, k: number): Float64Array;
    /**
     * Runs `sweeps` sweeps; returns `[iteration, lagrangian, train RMSE,
     * held-out RMSE]` per sweep, flattened.
     */
    step(sweeps: number): Float64Array;
}

/**
 * First coordinate of the prox of the column `[x, companion]` for every
 * `x` in `xs`. The companion entry shows how the group and nuclear
 * penalties couple the two coordinates.
 */
export function prox_curve(kind: string, lambda: number, t: number, mix: number, companion: number, xs: Float64Array): Float64Array;

/**
 * Row-major `n × n` matrix of kernel similarity times label consistency
 * for `n` points spread along a line with seeded jitter, labelled in
 * `groups` contiguous runs.
 */
export function similarity_matrix(n: number, kernel_name: string, xi: number, bandwidth: number, groups: number, same: number, different: number, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_completiondemo_free: (a: number, b: number) => void;
    readonly completiondemo_iteration: (a: number) => number;
    readonly completiondemo_new: (a: number, b: number, c: number, d: number, e: bigint, f: number) => [number, number, number];
    readonly completiondemo_size: (a: number) => number;
    readonly completiondemo_slice: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly completiondemo_step: (a: number, b: number) => [number, number, number, number];
    readonly prox_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly similarity_matrix: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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

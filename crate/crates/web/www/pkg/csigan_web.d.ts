/* tslint:disable */
/* eslint-disable */

/**
 * Outcome of the in-page training run.
 */
export class TinyRun {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    critic_losses(): Float32Array;
    /**
     * Mean generated amplitude map of `class`, raw scale.
     */
    fake_mean(_class: number): Float32Array;
    /**
     * One generated sample of `class`.
     */
    fake_sample(_class: number, index: number): Float32Array;
    gen_losses(): Float32Array;
    /**
     * Mean real amplitude map of `class`, raw scale.
     */
    real_mean(_class: number): Float32Array;
}

export function corpus_heatmap(separation: number, noise: number, seed: number, _class: number): Float32Array;

export function penalty_grid(span: number, steps: number, lambda: number): Float32Array;

export function tiny_train(iters: number, seed: number): TinyRun;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_tinyrun_free: (a: number, b: number) => void;
    readonly corpus_heatmap: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly penalty_grid: (a: number, b: number, c: number) => [number, number, number, number];
    readonly tiny_train: (a: number, b: number) => [number, number, number];
    readonly tinyrun_critic_losses: (a: number) => [number, number];
    readonly tinyrun_fake_mean: (a: number, b: number) => [number, number];
    readonly tinyrun_fake_sample: (a: number, b: number, c: number) => [number, number];
    readonly tinyrun_gen_losses: (a: number) => [number, number];
    readonly tinyrun_real_mean: (a: number, b: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
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

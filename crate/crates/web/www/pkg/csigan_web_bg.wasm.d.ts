/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_tinyrun_free: (a: number, b: number) => void;
export const corpus_heatmap: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const penalty_grid: (a: number, b: number, c: number) => [number, number, number, number];
export const tiny_train: (a: number, b: number) => [number, number, number];
export const tinyrun_critic_losses: (a: number) => [number, number];
export const tinyrun_fake_mean: (a: number, b: number) => [number, number];
export const tinyrun_fake_sample: (a: number, b: number, c: number) => [number, number];
export const tinyrun_gen_losses: (a: number) => [number, number];
export const tinyrun_real_mean: (a: number, b: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;

/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_curvetrainer_free: (a: number, b: number) => void;
export const curvetrainer_curve_at: (a: number, b: number, c: number) => [number, number, number, number];
export const curvetrainer_new: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number];
export const curvetrainer_radius: (a: number, b: number) => [number, number, number, number];
export const curvetrainer_steps: (a: number) => bigint;
export const curvetrainer_t_train: (a: number) => number;
export const curvetrainer_train: (a: number, b: number, c: number) => [number, number, number, number];
export const initial_curve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const radial_oracle: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;

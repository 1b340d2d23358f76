/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_recoverysession_free: (a: number, b: number) => void;
export const quantile_bins: (a: number, b: number, c: number) => [number, number, number, number];
export const recoverysession_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const recoverysession_scatter: (a: number) => [number, number, number, number];
export const recoverysession_step: (a: number, b: number) => [number, number, number, number];
export const richardson_profile: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;

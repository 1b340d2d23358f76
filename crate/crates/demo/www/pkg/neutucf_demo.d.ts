/* tslint:disable */
/* eslint-disable */

export class RecoverySession {
    free(): void;
    [Symbol.dispose](): void;
    constructor(size: number, true_rank: number, rank: number, samples: number, noise: number, seed: number);
    /**
     * `[[observed, predicted], ...]` on the held-out samples, as JSON.
     */
    scatter(): string;
    /**
     * Progress after `epochs` more epochs, as JSON.
     */
    step(epochs: number): string;
}

/**
 * Equal-frequency binning of `values`, as JSON.
 */
export function quantile_bins(values: Float64Array, bins: number): string;

/**
 * Richardson layers of a `z,theta,u,v` CSV profile, as JSON.
 */
export function richardson_profile(csv_text: string, gravity: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_recoverysession_free: (a: number, b: number) => void;
    readonly quantile_bins: (a: number, b: number, c: number) => [number, number, number, number];
    readonly recoverysession_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly recoverysession_scatter: (a: number) => [number, number, number, number];
    readonly recoverysession_step: (a: number, b: number) => [number, number, number, number];
    readonly richardson_profile: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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

/* tslint:disable */
/* eslint-disable */

/**
 * Trains a small network on a unit circle with constant initial speed.
 */
export class CurveTrainer {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Predicted curve at time `t` on `n` samples, as `[x, y, ...]`.
     */
    curve_at(t: number, n: number): Float64Array;
    /**
     * `hidden_layers × width` tanh network, `n_f` interior points.
     */
    constructor(r1: number, beta: number, hidden_layers: number, width: number, n_f: number, seed: bigint);
    /**
     * Predicted and reference mean radius on `n` times over the training
     * horizon, as interleaved `[t, predicted, reference, ...]`.
     */
    radius(n: number): Float64Array;
    steps(): bigint;
    t_train(): number;
    /**
     * Runs `n` Adam steps at `lr` and returns the unit-weight loss
     * `[total, pde, ic, bc]` before the last update.
     */
    train(n: number, lr: number): Float64Array;
}

/**
 * Initial ellipse `(a cos u, b sin u)` and its initial velocity on `n`
 * samples, as interleaved `[x, y, vx, vy, ...]`.
 */
export function initial_curve(a: number, b: number, velocity: string, r1: number, n: number): Float64Array;

/**
 * Radius of a shrinking circle (`"curve"`) or sphere (`"sphere"`) until
 * collapse, as interleaved `[t0, r0, t1, r1, ...]` with at most `samples`
 * pairs.
 */
export function radial_oracle(kind: string, r0: number, r1: number, beta: number, samples: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_curvetrainer_free: (a: number, b: number) => void;
    readonly curvetrainer_curve_at: (a: number, b: number, c: number) => [number, number, number, number];
    readonly curvetrainer_new: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number];
    readonly curvetrainer_radius: (a: number, b: number) => [number, number, number, number];
    readonly curvetrainer_steps: (a: number) => bigint;
    readonly curvetrainer_t_train: (a: number) => number;
    readonly curvetrainer_train: (a: number, b: number, c: number) => [number, number, number, number];
    readonly initial_curve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly radial_oracle: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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

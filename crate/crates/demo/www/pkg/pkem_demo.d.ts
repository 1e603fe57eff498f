/* tslint:disable */
/* eslint-disable */

/**
 * Derives parameters for a binary symmetric source; returns a JSON summary.
 */
export function derive(p: number, q: number, n: number, mode: string, eps: number): string;

/**
 * Encrypts `message` at n = 1200, t = 600, ν = 20, ℓ = 512 under a BSC
 * with crossover `p`, optionally flips one envelope bit, and decrypts.
 */
export function round_trip(p: number, message: string, seed: number, flip_bit: number): string;

/**
 * Runs a named game on the 4-symbol toy instance and returns JSON lines.
 */
export function run_game(name: string, trials: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly derive: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly round_trip: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly run_game: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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

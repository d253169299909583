/**
 * Stable integer error codes for the bcmg binding surface.
 *
 * This file is the header: the codes are part of the contract and must
 * not be renumbered. `bcmg_last_error()` returns the most recent one;
 * thrown `BcmgError`s carry the same value in `.code`.
 */

export const BCMG_OK = 0;
/** Input matrix is not positive definite; `pivot` is the 1-based bad pivot. */
export const BCMG_ERR_NOT_POSITIVE_DEFINITE = 1;
/** Bad arguments: dimensions, tile width, dtype mixing, unknown mode. */
export const BCMG_ERR_CONFIG = 2;
/** Eigenvalue iteration exceeded its step budget. */
export const BCMG_ERR_NO_CONVERGENCE = 3;
/** A device arena cap was exceeded before compute started. */
export const BCMG_ERR_OUT_OF_MEMORY = 4;
/** The backend computed a result but its residual check failed. */
export const BCMG_ERR_CHECK_FAILED = 5;
/** Operation on a closed or unknown session handle. */
export const BCMG_ERR_STALE_SESSION = 6;
/** Subprocess or file-format failure talking to the backend. */
export const BCMG_ERR_IO = 7;

export class BcmgError extends Error {
  readonly code: number;
  /** 1-based pivot index, set only for BCMG_ERR_NOT_POSITIVE_DEFINITE. */
  readonly pivot?: number;

  constructor(code: number, message: string, pivot?: number) {
    super(message);
    this.name = "BcmgError";
    this.code = code;
    if (pivot !== undefined) {
      this.pivot = pivot;
    }
  }
}

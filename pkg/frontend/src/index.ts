export {
  bcmg_close,
  bcmg_last_error,
  bcmg_open,
  bcmg_potri,
  bcmg_potrs,
  bcmg_syevd,
  type Mode,
} from "./api";
export {
  BCMG_ERR_CHECK_FAILED,
  BCMG_ERR_CONFIG,
  BCMG_ERR_IO,
  BCMG_ERR_NO_CONVERGENCE,
  BCMG_ERR_NOT_POSITIVE_DEFINITE,
  BCMG_ERR_OUT_OF_MEMORY,
  BCMG_ERR_STALE_SESSION,
  BCMG_OK,
  BcmgError,
} from "./errors";
export {
  bytesPerElement,
  decodeMatrix,
  encodeMatrix,
  makeMatrix,
  scalarIndex,
  scalarsPerElement,
  type Dtype,
  type HostMatrix,
} from "./matfile";

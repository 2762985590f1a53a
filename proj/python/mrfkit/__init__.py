"""mrfkit: ground-truth-free MRF reconstruction toolkit."""

from ._core import (
    MrfConfigError,
    MrfIoError,
    MrfNumericalError,
    NufftPlan,
    build_desk_dataset,
    build_dictionary,
    compress,
    compute_basis,
    decompress,
    default_flip_train,
    dict_match,
    make_coils,
    make_phantom,
    make_spiral,
    mape,
    psnr,
    read_tensor,
    recon,
    simulate_fingerprint,
    ssim,
    write_tensor,
)

__all__ = [
    "MrfConfigError",
    "MrfIoError",
    "MrfNumericalError",
    "NufftPlan",
    "build_desk_dataset",
    "build_dictionary",
    "compress",
    "compute_basis",
    "decompress",
    "default_flip_train",
    "dict_match",
    "make_coils",
    "make_phantom",
    "make_spiral",
    "mape",
    "psnr",
    "read_tensor",
    "recon",
    "simulate_fingerprint",
    "ssim",
    "write_tensor",
]

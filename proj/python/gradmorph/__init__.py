"""Gradient-driven input transfer for segmentation networks.

The heavy lifting lives in the compiled `_core` extension; this package
re-exports its surface.
"""

from gradmorph._core import (  # noqa: F401
    ContractViolation,
    DataError,
    IoError,
    PerturbConfig,
    SegModel,
    SegNetConfig,
    TranslationLossConfig,
    TranslatorConfig,
    TranslatorModel,
    build_segnet,
    build_translator,
    compute_perturbation,
    dice,
    fnr,
    fpr,
    gaussian_kde,
    generate_synthetic,
    kde_default_grid,
    l1_mean,
    load_segnet,
    load_translator,
    objective_g,
    read_pgm,
    read_tensor,
    save_segnet,
    save_translator,
    silverman_bandwidth,
    ssim,
    train_segmentation,
    train_translator,
    translation_loss,
    write_pgm,
    write_tensor,
)

__version__ = "0.1.0"

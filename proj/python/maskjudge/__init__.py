"""Masked-saliency attention audits judged by a vision-language model."""

from ._maskjudge import (
    Error,
    __version__,
    acceptance_rate,
    activate,
    activate_mask,
    apply_mask,
    build_prompt,
    confusion_matrix,
    decode_png,
    emit_report,
    encode_png,
    format_assessment,
    load_manifest,
    mask_file,
    parse_assessment,
    pearson,
    resize_map,
    run_pipeline,
)

__all__ = [
    "Error",
    "__version__",
    "acceptance_rate",
    "activate",
    "activate_mask",
    "apply_mask",
    "build_prompt",
    "confusion_matrix",
    "decode_png",
    "emit_report",
    "encode_png",
    "format_assessment",
    "load_manifest",
    "mask_file",
    "parse_assessment",
    "pearson",
    "resize_map",
    "run_pipeline",
]

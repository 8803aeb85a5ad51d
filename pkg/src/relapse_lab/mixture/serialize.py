"""Versioned JSON codec for kept posterior samples.

Only the parameters needed for prediction are stored; per-patient latent
states are dropped, so a round trip yields samples with ``None`` latents.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .params import MixtureSample

__all__ = ["samples_to_dict", "samples_from_dict"]

_FORMAT = "relapse-lab-mixture-samples"
_VERSION = 1


def samples_to_dict(samples: list[MixtureSample], schema) -> dict:
    if not samples:
        raise ConfigError("cannot serialize an empty sample list")
    return {
        "format": _FORMAT,
        "version": _VERSION,
        "schema": [str(name) for name in schema],
        "samples": [
            {
                "weights": sample.weights.tolist(),
                "locations": sample.locations.tolist(),
                "scales": sample.scales.tolist(),
                "skews": sample.skews.tolist(),
                "dofs": sample.dofs.tolist(),
                "censor_location": float(sample.censor_location),
                "censor_scale": float(sample.censor_scale),
            }
            for sample in samples
        ],
    }


def samples_from_dict(doc: dict) -> tuple[tuple[str, ...], list[MixtureSample]]:
    if not isinstance(doc, dict) or doc.get("format") != _FORMAT:
        raise ConfigError(f"not a mixture sample document (format {doc.get('format')!r})")
    if doc.get("version") != _VERSION:
        raise ConfigError(f"unsupported mixture sample version {doc.get('version')!r}")
    schema = tuple(str(name) for name in doc.get("schema", ()))
    if not schema:
        raise ConfigError("mixture sample document lacks a covariate schema")
    raw = doc.get("samples")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("mixture sample document holds no samples")
    samples = []
    for entry in raw:
        try:
            samples.append(
                MixtureSample(
                    np.array(entry["weights"], dtype=float),
                    np.array(entry["locations"], dtype=float),
                    np.array(entry["scales"], dtype=float),
                    np.array(entry["skews"], dtype=float),
                    np.array(entry["dofs"], dtype=float),
                    float(entry["censor_location"]),
                    float(entry["censor_scale"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed mixture sample entry: {exc}") from exc
    return schema, samples

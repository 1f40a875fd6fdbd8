"""Model file format: schema-versioned JSON with exact binary64 floats.

Numeric arrays are stored as hex float strings so that save/load round
trips are bit-exact; a checksum over the canonically serialized payload
guards against truncation and corruption.  Field order is canonical
(sorted keys), so identical models produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import fusion, limits, mixture, sfa

SCHEMA_VERSION = 1
FORMAT_NAME = "msfa-model"


class ModelFileError(Exception):
    """Base class for model persistence failures."""


class ModelVersionError(ModelFileError):
    """The file declares an unsupported schema version."""


class ModelCorruptError(ModelFileError):
    """The file is not a parseable model document."""


class ModelChecksumError(ModelFileError):
    """The payload does not match its recorded checksum."""


def _encode_array(arr: np.ndarray) -> dict:
    arr = np.asarray(arr)
    if arr.dtype.kind == "f":
        data = [float(v).hex() for v in arr.ravel(order="C")]
        dtype = "float64"
    elif arr.dtype.kind in "iu":
        data = [int(v) for v in arr.ravel(order="C")]
        dtype = "int64"
    else:
        raise ValueError(f"unsupported array dtype {arr.dtype}")
    return {"dtype": dtype, "shape": list(arr.shape), "data": data}


def _decode_array(doc: dict) -> np.ndarray:
    try:
        dtype = doc["dtype"]
        shape = tuple(doc["shape"])
        data = doc["data"]
    except (KeyError, TypeError) as exc:
        raise ModelCorruptError(f"malformed array block: {exc}") from exc
    if dtype == "float64":
        flat = np.array([float.fromhex(v) for v in data], dtype=np.float64)
    elif dtype == "int64":
        flat = np.array(data, dtype=np.int64)
    else:
        raise ModelCorruptError(f"unsupported array dtype {dtype!r}")
    if flat.size != int(np.prod(shape)):
        raise ModelCorruptError("array data does not match declared shape")
    return flat.reshape(shape)


def _encode_chi2(ref: limits.Chi2Reference) -> dict:
    return {"xi": ref.xi, "dof": ref.dof, "limit": ref.limit}


def _decode_chi2(doc: dict) -> limits.Chi2Reference:
    return limits.Chi2Reference(
        xi=float(doc["xi"]), dof=float(doc["dof"]), limit=float(doc["limit"])
    )


def _encode_f(ref: limits.FReference) -> dict:
    return {
        "scale": ref.scale, "dof1": ref.dof1, "dof2": ref.dof2,
        "limit": ref.limit, "lam": _encode_array(ref.lam),
    }


def _decode_f(doc: dict) -> limits.FReference:
    return limits.FReference(
        scale=float(doc["scale"]), dof1=float(doc["dof1"]),
        dof2=float(doc["dof2"]), limit=float(doc["limit"]),
        lam=_decode_array(doc["lam"]),
    )


def _encode_model(model: fusion.MsfaModel) -> dict:
    mix = model.mixture
    return {
        "lag": model.lag,
        "alpha": model.alpha,
        "version": model.version,
        "provenance": {str(k): str(v) for k, v in model.provenance.items()},
        "mixture": {
            "dim": mix.dim,
            "n_samples": mix.n_samples,
            "collapse_count": mix.collapse_count,
            "fit_log": _encode_array(mix.fit_log),
            "config": {
                "max_iter": mix.config.max_iter,
                "tol": mix.config.tol,
                "reg_scale": mix.config.reg_scale,
                "seed": mix.config.seed,
                "max_collapses": mix.config.max_collapses,
            },
            "components": [
                {
                    "weight": c.weight,
                    "mean": _encode_array(c.mean),
                    "cov": _encode_array(c.cov),
                }
                for c in mix.components
            ],
        },
        "patterns": [
            {
                "pattern_id": p.sfa.pattern_id,
                "offset": _encode_array(p.sfa.offset),
                "scale": _encode_array(p.sfa.scale),
                "weights_slow": _encode_array(p.sfa.weights_slow),
                "weights_resid": _encode_array(p.sfa.weights_resid),
                "slowness": _encode_array(p.sfa.slowness),
                "dropped": p.sfa.dropped,
                "limits": {
                    "alpha": p.limits.alpha,
                    "n_train": p.limits.n_train,
                    "steady_slow": _encode_chi2(p.limits.steady_slow),
                    "steady_resid": _encode_chi2(p.limits.steady_resid),
                    "dyn_slow": _encode_f(p.limits.dyn_slow),
                    "dyn_resid": _encode_f(p.limits.dyn_resid),
                },
            }
            for p in model.patterns
        ],
    }


def _decode_model(payload: dict) -> fusion.MsfaModel:
    try:
        mix_doc = payload["mixture"]
        config = mixture.EmConfig(
            max_iter=int(mix_doc["config"]["max_iter"]),
            tol=float(mix_doc["config"]["tol"]),
            reg_scale=float(mix_doc["config"]["reg_scale"]),
            seed=int(mix_doc["config"]["seed"]),
            max_collapses=int(mix_doc["config"]["max_collapses"]),
        )
        components = tuple(
            mixture.GaussianComponent(
                weight=float(c["weight"]),
                mean=_decode_array(c["mean"]),
                cov=_decode_array(c["cov"]),
            )
            for c in mix_doc["components"]
        )
        mix = mixture.MixtureModel(
            components=components,
            dim=int(mix_doc["dim"]),
            fit_log=_decode_array(mix_doc["fit_log"]),
            config=config,
            n_samples=int(mix_doc["n_samples"]),
            collapse_count=int(mix_doc["collapse_count"]),
        )
        patterns = []
        for p in payload["patterns"]:
            pattern_sfa = sfa.PatternSfa(
                pattern_id=int(p["pattern_id"]),
                offset=_decode_array(p["offset"]),
                scale=_decode_array(p["scale"]),
                weights_slow=_decode_array(p["weights_slow"]),
                weights_resid=_decode_array(p["weights_resid"]),
                slowness=_decode_array(p["slowness"]),
                dropped=int(p["dropped"]),
            )
            lim_doc = p["limits"]
            pattern_limits = limits.ControlLimits(
                alpha=float(lim_doc["alpha"]),
                n_train=int(lim_doc["n_train"]),
                steady_slow=_decode_chi2(lim_doc["steady_slow"]),
                steady_resid=_decode_chi2(lim_doc["steady_resid"]),
                dyn_slow=_decode_f(lim_doc["dyn_slow"]),
                dyn_resid=_decode_f(lim_doc["dyn_resid"]),
            )
            patterns.append(
                fusion.PatternModel(sfa=pattern_sfa, limits=pattern_limits)
            )
        return fusion.MsfaModel(
            lag=int(payload["lag"]),
            mixture=mix,
            patterns=tuple(patterns),
            alpha=float(payload["alpha"]),
            version=str(payload["version"]),
            provenance=dict(payload["provenance"]),
        )
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelCorruptError(f"malformed model payload: {exc}") from exc


def _canonical(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def save_model(model: fusion.MsfaModel, path: str | Path) -> None:
    """Write the model document; identical models yield identical bytes."""
    payload = _encode_model(model)
    canonical = _canonical(payload)
    document = {
        "format": FORMAT_NAME,
        "schema_version": SCHEMA_VERSION,
        "checksum": hashlib.sha256(canonical.encode()).hexdigest(),
        "payload": payload,
    }
    Path(path).write_text(
        json.dumps(document, sort_keys=True, indent=1) + "\n"
    )


def load_model(path: str | Path) -> fusion.MsfaModel:
    """Read and verify a model document.

    Raises ModelCorruptError for unreadable files, ModelVersionError for
    unsupported schema versions, and ModelChecksumError when the payload
    does not match its checksum.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelCorruptError(f"cannot read model file: {exc}") from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelCorruptError(f"not a valid model document: {exc}") from exc
    if not isinstance(document, dict) or document.get("format") != FORMAT_NAME:
        raise ModelCorruptError("file is not a model document")
    version = document.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ModelVersionError(
            f"schema version {version!r} is not supported "
            f"(expected {SCHEMA_VERSION})"
        )
    payload = document.get("payload")
    if not isinstance(payload, dict):
        raise ModelCorruptError("missing payload")
    digest = hashlib.sha256(_canonical(payload).encode()).hexdigest()
    if digest != document.get("checksum"):
        raise ModelChecksumError("payload checksum mismatch")
    return _decode_model(payload)


def models_equal(a: fusion.MsfaModel, b: fusion.MsfaModel) -> bool:
    """Structural equality including every float, bit for bit."""
    return _canonical(_encode_model(a)) == _canonical(_encode_model(b))

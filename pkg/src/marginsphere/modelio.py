"""JSON persistence for trained models.

Floats are serialized with full repr precision so a saved run is diffable
and exactly reloadable.
"""

from __future__ import annotations

import json

import numpy as np

from .data import FeatureStats
from .errors import ConfigError
from .network import Layer, Network
from .trainer import FittedModel


def _arr(a):
    return np.asarray(a, dtype=np.float64).tolist()


def save_model(path, model, feature_stats=None):
    net = model.net
    payload = {
        "variant": model.variant,
        "network": {
            "layers": [
                {"weight": _arr(l.weight), "bias": _arr(l.bias), "activation": l.activation}
                for l in net.layers
            ],
            "final_w": _arr(net.final_w),
            "final_b": net.final_b,
            "rho_bar": net.rho_bar,
        },
        "sphere": {
            "c": _arr(model.c) if model.c is not None else None,
            "R_sq": model.R_sq,
            "R_bar": model.R_bar,
            "rho_bar": model.rho_bar,
        },
        "feature_stats": {
            "mean": _arr(feature_stats.mean),
            "std": _arr(feature_stats.std),
        } if feature_stats is not None else None,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    """Returns (FittedModel, FeatureStats | None)."""
    with open(path) as fh:
        payload = json.load(fh)
    try:
        netspec = payload["network"]
        net = Network(
            layers=[
                Layer(np.array(l["weight"]), np.array(l["bias"]), l["activation"])
                for l in netspec["layers"]
            ],
            final_w=np.array(netspec["final_w"]),
            final_b=netspec["final_b"],
            rho_bar=netspec["rho_bar"],
        )
        sphere = payload["sphere"]
        model = FittedModel(
            variant=payload["variant"],
            net=net,
            c=np.array(sphere["c"]) if sphere["c"] is not None else None,
            R_sq=sphere["R_sq"],
            R_bar=sphere["R_bar"],
            rho_bar=sphere["rho_bar"],
        )
        stats = None
        if payload.get("feature_stats"):
            stats = FeatureStats(
                mean=np.array(payload["feature_stats"]["mean"]),
                std=np.array(payload["feature_stats"]["std"]),
            )
        return model, stats
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed model file ({exc})") from exc

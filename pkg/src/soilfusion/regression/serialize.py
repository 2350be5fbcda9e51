"""Versioned JSON documents for fitted models."""
from __future__ import annotations

import json

import numpy as np

from ..errors import SchemaError
from .forest import ForestModel, ForestParams, Tree, _TREE_FIELDS
from .linear import LinearModel

FORMAT_VERSION = 1
_INT_FIELDS = {"feature", "left", "right", "n_samples"}


def forest_to_dict(model: ForestModel) -> dict:
    return {
        "format": "soilfusion.forest",
        "version": FORMAT_VERSION,
        "params": {
            "n_trees": model.params.n_trees,
            "k_features": model.params.k_features,
            "min_samples_split": model.params.min_samples_split,
            "seed": model.params.seed,
        },
        "n_features": model.n_features,
        "feature_importances": model.feature_importances.tolist(),
        # nodes are stored in preorder, children as indices within the tree
        "trees": [{name: getattr(t, name).tolist() for name in _TREE_FIELDS} for t in model.trees],
    }


def forest_from_dict(doc: dict) -> ForestModel:
    if doc.get("format") != "soilfusion.forest":
        raise SchemaError(f"not a forest document: format={doc.get('format')!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported forest document version {doc.get('version')!r}")
    trees = tuple(
        Tree(**{
            name: np.asarray(t[name], dtype=np.int64 if name in _INT_FIELDS else np.float64)
            for name in _TREE_FIELDS
        })
        for t in doc["trees"]
    )
    return ForestModel(
        trees=trees,
        params=ForestParams(**doc["params"]),
        n_features=int(doc["n_features"]),
        feature_importances=np.asarray(doc["feature_importances"], dtype=np.float64),
    )


def linear_to_dict(model: LinearModel) -> dict:
    return {
        "format": "soilfusion.linear",
        "version": FORMAT_VERSION,
        "weights": model.weights.tolist(),
        "intercept": model.intercept,
    }


def linear_from_dict(doc: dict) -> LinearModel:
    if doc.get("format") != "soilfusion.linear" or doc.get("version") != FORMAT_VERSION:
        raise SchemaError("not a version-1 linear model document")
    return LinearModel(weights=np.asarray(doc["weights"], dtype=np.float64),
                       intercept=float(doc["intercept"]))


def dumps(model) -> str:
    if isinstance(model, ForestModel):
        doc = forest_to_dict(model)
    elif isinstance(model, LinearModel):
        doc = linear_to_dict(model)
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    return json.dumps(doc, sort_keys=True)


def loads(text: str):
    doc = json.loads(text)
    if doc.get("format") == "soilfusion.linear":
        return linear_from_dict(doc)
    return forest_from_dict(doc)

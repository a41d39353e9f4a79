"""JSON schemas for everything the CLI prints on stdout."""

from __future__ import annotations

from typing import Any

import jsonschema

_NUM = {"type": "number"}
_INT = {"type": "integer"}

INFER = {
    "type": "object",
    "required": ["method", "predictions", "num_queries", "num_classes", "poisson_steps", "timing"],
    "properties": {
        "method": {"enum": ["ptn", "dpn", "poisson", "lp"]},
        "predictions": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
        "num_queries": {"type": "integer", "minimum": 1},
        "num_classes": {"type": "integer", "minimum": 2},
        "poisson_steps": {"type": ["integer", "null"]},
        "calibrated": {"type": "boolean"},
        "timing": {"type": "object", "required": ["seconds"], "properties": {"seconds": _NUM}},
    },
}

EPISODES = {
    "type": "object",
    "required": ["mean_accuracy", "ci95", "num_episodes", "per_episode", "config", "wall_time"],
    "properties": {
        "mean_accuracy": {"type": "number", "minimum": 0, "maximum": 100},
        "ci95": {"type": "number", "minimum": 0},
        "num_episodes": {"type": "integer", "minimum": 1},
        "per_episode": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "config": {"type": "object", "required": ["spec", "method", "solver"]},
        "wall_time": _NUM,
    },
}

LOSS = {
    "type": "object",
    "required": ["loss", "grad_norm", "n", "d"],
    "properties": {"loss": _NUM, "grad_norm": {"type": "number", "minimum": 0}, "n": _INT, "d": _INT,
                   "tau": _NUM, "lambda": _NUM},
}

VALIDATE = {
    "type": "object",
    "required": ["valid", "violations", "m", "num_classes", "shots", "n_unlabeled", "n_query"],
    "properties": {
        "valid": {"type": "boolean"},
        "violations": {"type": "array", "items": {"type": "string"}},
        "m": _INT, "num_classes": _INT, "shots": _INT, "n_unlabeled": _INT, "n_query": _INT,
    },
}

ORACLE = {
    "type": "object",
    "required": ["m", "max_abs_diff", "iterative_steps", "dense_residual", "iterative_residual"],
    "properties": {"m": _INT, "max_abs_diff": _NUM, "iterative_steps": _INT,
                   "dense_residual": _NUM, "iterative_residual": _NUM},
}

SYNTH = {
    "type": "object",
    "required": ["path", "num_points", "num_classes", "dim"],
    "properties": {"path": {"type": "string"}, "num_points": _INT, "num_classes": _INT, "dim": _INT},
}

SCHEMAS = {"infer": INFER, "episodes": EPISODES, "loss": LOSS, "validate": VALIDATE,
           "oracle": ORACLE, "synth": SYNTH}


def validate_output(kind: str, document: Any) -> None:
    """Raise :class:`jsonschema.ValidationError` if ``document`` does not match."""
    jsonschema.validate(document, SCHEMAS[kind])

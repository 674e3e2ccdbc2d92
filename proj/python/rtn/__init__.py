"""Relation Transformer Network: scene graph generation on synthetic scenes."""

import json

from ._core import (
    Config,
    ConfigError,
    Dataset,
    DimensionError,
    IndexError,
    Model,
    ParseError,
    RtnError,
    UsageError,
    ValidationError,
    edge_positional_encoding,
    evaluate,
    generate_data,
    iou,
    load_data,
    node_positional_encoding,
    rank_triplets,
    run_cli,
)


def scenes(data, split):
    """Scenes of one split as dicts."""
    return [json.loads(line) for line in data.scene_lines(split)]


def config(**settings):
    """Config with dotted keys given as keyword arguments, e.g. config(train__lr=0.02)."""
    cfg = Config()
    for key, value in settings.items():
        cfg.set(key.replace("__", "."), str(value))
    return cfg


__all__ = [name for name in dir() if not name.startswith("_")]

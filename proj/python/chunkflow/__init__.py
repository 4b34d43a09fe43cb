"""Chunked action discovery for amortized samplers: Python access to the C++ core."""

from ._chunkflow import (
    ConfigError,
    bitseq_max_word_tiling,
    echo_config,
    inspect_library,
    jsd,
    l1_distance,
    parse_config,
    report,
    shortest_parse,
    spearman,
    train,
    transfer,
)

__all__ = [
    "ConfigError",
    "bitseq_max_word_tiling",
    "echo_config",
    "inspect_library",
    "jsd",
    "l1_distance",
    "parse_config",
    "report",
    "shortest_parse",
    "spearman",
    "train",
    "transfer",
]

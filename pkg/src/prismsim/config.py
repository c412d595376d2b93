"""Experiment configuration: JSON schema, defaults, profiles, validation.

A config fully determines a run together with the seed.  ``resolve``
fills defaults and validates; errors name the offending field so the CLI
can exit with a useful diagnostic.
"""
from __future__ import annotations

import copy
import json
from typing import Any

from .crypto import sha256


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"config field '{field_name}': {message}")


DEFAULTS: dict[str, Any] = {
    "protocol": "prism",
    "seed": 0,  # default stream; the CLI --seed flag overrides
    "duration": 60.0,
    "checkpoint_interval": 0.5,
    "steady_state_fraction": 0.2,
    "signature_scheme": "mock",
    "topology": {
        "kind": "regular",  # regular | ring | complete
        "nodes": 20,
        "degree": 4,
        "delay_s": 0.12,
        "bandwidth_bytes_per_s": 1.25e6,  # 10 Mbit/s
    },
    "prism": {
        "m": 100,
        "rate_voter_per_chain": 0.4,
        "rate_tx": 1.0,
        "rate_prop": 0.25,
        "tx_block_capacity": 228,
        "beta": 0.3,
        "epsilon": 1e-3,
        "vote_rule": "first_seen",  # most_voted for the balancing defence
        "list_decoding_cap": 256,
    },
    "longest_chain": {
        "rate": 0.25,
        "block_capacity": 228,
        "confirm_depth": 24,
    },
    "workload": {
        "tps": 20.0,
        "wallets": 16,
        "coin_value": 10,
        "genesis_coins": None,  # default: sized to the expected tx volume
    },
    "adversary": {
        "strategy": "none",  # none | private_double_spend | censorship | balancing
        "fraction": 0.0,
        "target_level": 1,
        "release_margin": 0,
        "release_timeout_fraction": 0.85,
        "mine_competitors": True,
    },
    "spam": {
        "enabled": False,
        "tps": 2.0,
        "victims": 0,  # 0 = every honest node
        "jitter": {"kind": "none", "max_s": 5.0, "mean_s": 10.0},
        "normalize": True,
    },
    "sizes": {
        "block_overhead_bytes": 500,
        "bytes_per_tx": 168,
        "bytes_per_ref": 32,
    },
    "allow_high_beta": False,
}

PROFILES: dict[str, dict] = {
    # desk scale: small graph, m=100, short runs
    "desk": {},
    # shape-matching profile: m=1000 voter chains, paper-style tx capacity
    "paper-shape": {
        "prism": {"m": 1000, "rate_voter_per_chain": 0.04},
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve(raw: dict | None = None, profile: str | None = None) -> dict:
    """Overlay profile and user config onto the defaults, then validate."""
    cfg = copy.deepcopy(DEFAULTS)
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError("profile", f"unknown profile {profile!r}")
        cfg = _deep_merge(cfg, PROFILES[profile])
    if raw:
        cfg = _deep_merge(cfg, raw)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    if cfg["protocol"] not in ("prism", "longest_chain"):
        raise ConfigError("protocol", f"must be 'prism' or 'longest_chain', got {cfg['protocol']!r}")
    if cfg["duration"] <= 0:
        raise ConfigError("duration", "must be > 0")
    if cfg["checkpoint_interval"] <= 0:
        raise ConfigError("checkpoint_interval", "must be > 0")
    if not 0.0 <= cfg["steady_state_fraction"] < 1.0:
        raise ConfigError("steady_state_fraction", "must lie in [0, 1)")
    if cfg["signature_scheme"] not in ("mock", "ed25519"):
        raise ConfigError("signature_scheme", "must be 'mock' or 'ed25519'")

    topo = cfg["topology"]
    if topo["kind"] not in ("regular", "ring", "complete"):
        raise ConfigError("topology.kind", f"unknown kind {topo['kind']!r}")
    if topo["nodes"] < 1:
        raise ConfigError("topology.nodes", "must be >= 1")
    if topo["kind"] == "regular":
        n, d = topo["nodes"], topo["degree"]
        if d >= n or (n * d) % 2 != 0:
            raise ConfigError("topology.degree", f"no {d}-regular graph on {n} nodes")
    if topo["delay_s"] < 0:
        raise ConfigError("topology.delay_s", "must be >= 0")
    if topo["bandwidth_bytes_per_s"] <= 0:
        raise ConfigError("topology.bandwidth_bytes_per_s", "must be > 0")

    prism = cfg["prism"]
    for key in ("rate_voter_per_chain", "rate_tx", "rate_prop"):
        if prism[key] <= 0:
            raise ConfigError(f"prism.{key}", "must be > 0")
    if prism["m"] < 1:
        raise ConfigError("prism.m", "must be >= 1")
    if not 0.0 < prism["beta"] < 0.5:
        raise ConfigError("prism.beta", "must lie in (0, 0.5)")
    if not 0.0 < prism["epsilon"] < 1.0:
        raise ConfigError("prism.epsilon", "must lie in (0, 1)")
    if prism["vote_rule"] not in ("first_seen", "most_voted"):
        raise ConfigError("prism.vote_rule", "must be 'first_seen' or 'most_voted'")

    lc = cfg["longest_chain"]
    if lc["rate"] <= 0:
        raise ConfigError("longest_chain.rate", "must be > 0")
    if lc["confirm_depth"] < 1:
        raise ConfigError("longest_chain.confirm_depth", "must be >= 1")

    adv = cfg["adversary"]
    strategies = ("none", "private_double_spend", "censorship", "balancing")
    if adv["strategy"] not in strategies:
        raise ConfigError("adversary.strategy", f"must be one of {strategies}")
    if adv["strategy"] != "none":
        beta = adv["fraction"]
        if beta < 0:
            raise ConfigError("adversary.fraction", "must be >= 0")
        if beta >= 0.5 and not cfg["allow_high_beta"]:
            raise ConfigError(
                "beta", f"adversary fraction {beta} >= 0.5 requires allow_high_beta"
            )
    if adv["strategy"] == "balancing" and cfg["prism"]["vote_rule"] != "most_voted":
        raise ConfigError(
            "prism.vote_rule", "the balancing scenario requires the most_voted rule"
        )

    spam = cfg["spam"]
    if spam["enabled"]:
        if spam["tps"] <= 0:
            raise ConfigError("spam.tps", "must be > 0")
        if spam["jitter"]["kind"] not in ("none", "uniform", "exponential"):
            raise ConfigError("spam.jitter.kind", "must be none/uniform/exponential")

    if cfg["workload"]["tps"] < 0:
        raise ConfigError("workload.tps", "must be >= 0")


def config_digest(cfg: dict) -> str:
    """Stable digest of a resolved config, recorded in every report."""
    return sha256(json.dumps(cfg, sort_keys=True).encode()).hex()


def load_config(path: str, profile: str | None = None) -> dict:
    with open(path) as fh:
        raw = json.load(fh)
    return resolve(raw, profile=profile)

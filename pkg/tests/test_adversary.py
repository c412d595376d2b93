import numpy as np
import pytest
from scipy import stats

from prismsim.blocks import validate_block
from prismsim.config import resolve
from prismsim.crypto import get_scheme
from prismsim.netsim import Simulation, run


def attack_cfg(strategy, fraction, **extra):
    base = {
        "duration": 20.0,
        "topology": {"nodes": 6, "degree": 4, "delay_s": 0.1},
        "prism": {"m": 20, "rate_voter_per_chain": 0.5, "rate_tx": 1.0, "rate_prop": 0.3},
        "workload": {"tps": 10.0},
        "adversary": {"strategy": strategy, "fraction": fraction, **extra},
    }
    if strategy == "balancing":
        base["prism"]["vote_rule"] = "most_voted"
    return resolve(base)


def test_zero_fraction_strategies_behave_honestly():
    # a configured strategy with no adversarial power leaves the trace
    # bitwise identical to the attack-free run
    plain = run(attack_cfg("none", 0.0), seed=5).report.deterministic_dict()
    cens = run(attack_cfg("censorship", 0.0), seed=5).report.deterministic_dict()
    priv = run(attack_cfg("private_double_spend", 0.0), seed=5).report.deterministic_dict()
    for other in (cens, priv):
        a = {k: v for k, v in plain.items() if k not in ("attack", "config_digest")}
        b = {k: v for k, v in other.items() if k not in ("attack", "config_digest")}
        assert a == b


def test_private_zero_power_never_succeeds():
    report = run(attack_cfg("private_double_spend", 0.0), seed=3).report
    assert report.attack["success"] in (False, None)
    assert report.confirmation["reversals"] == 0


def test_adversary_mines_its_power_share():
    cfg = attack_cfg("private_double_spend", 0.3, target_level=1)
    result = run(resolve({**cfg, "duration": 60.0}), seed=8)
    sim = result.sim
    adv_id = sim.topology.n - 1
    mined_by_adv = sum(1 for b in sim.blocks_by_digest.values() if b.miner_id == adv_id)
    total = len(sim.blocks_by_digest)
    share = mined_by_adv / total
    sigma = np.sqrt(0.3 * 0.7 / total)
    assert abs(share - 0.3) < 3 * sigma


def test_adversarial_blocks_pass_validation():
    cfg = attack_cfg("private_double_spend", 0.3)
    result = run(cfg, seed=2)
    sim = result.sim
    assert sim.invalid_blocks == 0
    scheme = get_scheme(cfg["signature_scheme"])
    adv_id = sim.topology.n - 1
    adversarial = [b for b in sim.blocks_by_digest.values() if b.miner_id == adv_id]
    assert adversarial
    for block in adversarial:
        validate_block(block, sim.params, scheme)


def test_private_attack_releases_and_votes_private_candidate():
    cfg = resolve(
        {
            "duration": 25.0,
            "topology": {"nodes": 6, "degree": 4, "delay_s": 0.1},
            "prism": {"m": 40, "rate_voter_per_chain": 0.6, "rate_tx": 0.5, "rate_prop": 1.0},
            "workload": {"tps": 2.0},
            "adversary": {
                "strategy": "private_double_spend",
                "fraction": 0.3,
                "target_level": 1,
                "release_timeout_fraction": 0.6,
            },
        }
    )
    result = run(cfg, seed=13)
    sim = result.sim
    strategy = sim.nodes[-1].strategy
    assert strategy.released
    assert strategy.private_block is not None
    # the withheld candidate is a proposer block at the target level and
    # reached honest nodes after release
    assert strategy.private_block.level == 1
    assert sim.nodes[sim.observer].state.has_block(strategy.private_block.digest)


def test_overwhelming_adversary_causes_detected_reversal():
    """With 80% hash power against an observer that assumes beta=0.05 and
    confirms shallow, the released private fork must flip the confirmed
    leader and the engine must record the reversal."""
    cfg = resolve(
        {
            "duration": 40.0,
            "checkpoint_interval": 0.5,
            "topology": {"nodes": 6, "degree": 4, "delay_s": 0.1},
            "prism": {
                "m": 30,
                "rate_voter_per_chain": 1.2,
                "rate_tx": 0.5,
                "rate_prop": 0.5,
                "beta": 0.05,  # observer badly underestimates the adversary
                "epsilon": 1e-3,
            },
            "workload": {"tps": 2.0},
            "adversary": {
                "strategy": "private_double_spend",
                "fraction": 0.80,
                "target_level": 1,
                "release_margin": 10**6,  # force the timeout release
                "release_timeout_fraction": 0.7,
            },
            "allow_high_beta": True,
        }
    )
    hits = 0
    for seed in (1, 2, 3):
        report = run(cfg, seed=seed).report
        if report.attack["success"]:
            hits += 1
    assert hits >= 2, f"only {hits}/3 overwhelming attacks flipped the leader"


def test_censorship_blocks_are_empty():
    cfg = attack_cfg("censorship", 0.34)
    result = run(cfg, seed=4)
    sim = result.sim
    adv_ids = {n.id for n in sim.nodes if n.adversarial}
    assert adv_ids
    for block in sim.blocks_by_digest.values():
        if block.miner_id in adv_ids:
            if block.block_type.kind == "transaction":
                assert block.content.txs == ()
            elif block.block_type.kind == "proposer":
                assert block.content.prp_refs == () and block.content.tx_refs == ()


def test_balancing_adversary_votes_runner_up():
    cfg = resolve(
        {
            "duration": 30.0,
            "topology": {"nodes": 6, "degree": 4, "delay_s": 0.1},
            "prism": {
                "m": 30,
                "rate_voter_per_chain": 0.5,
                "rate_tx": 0.5,
                "rate_prop": 0.4,
                "vote_rule": "most_voted",
            },
            "workload": {"tps": 2.0},
            "adversary": {"strategy": "balancing", "fraction": 0.34},
        }
    )
    result = run(cfg, seed=6)
    sim = result.sim
    # balancing keeps contested levels: at least one level with 2+ candidates
    state = sim.nodes[sim.observer].state
    contested = [
        level for level, digests in state.prp_by_level.items() if len(digests) >= 2
    ]
    assert contested
    assert result.report.confirmation["reversals"] == 0


def test_balancing_requires_most_voted_rule():
    from prismsim.config import ConfigError

    with pytest.raises(ConfigError):
        resolve({"adversary": {"strategy": "balancing", "fraction": 0.2}})


def test_spam_without_jitter_normalizes_to_one():
    cfg = resolve(
        {
            "duration": 20.0,
            "topology": {"nodes": 8, "degree": 4, "delay_s": 0.1},
            "prism": {"m": 10, "rate_voter_per_chain": 0.3, "rate_tx": 20.0, "rate_prop": 0.2},
            "workload": {"tps": 0.0},
            "spam": {"enabled": True, "tps": 2.0, "jitter": {"kind": "none"}},
        }
    )
    report = run(cfg, seed=7).report
    assert report.spam["conflict_sets"] > 10
    assert report.spam["inclusions"] > 0
    assert report.spam["normalized"] == 1.0


def test_spam_jitter_reduces_inclusions():
    base = {
        "duration": 25.0,
        "topology": {"nodes": 8, "degree": 4, "delay_s": 0.12},
        "prism": {"m": 10, "rate_voter_per_chain": 0.3, "rate_tx": 60.0, "rate_prop": 0.2},
        "workload": {"tps": 0.0},
        "spam": {"enabled": True, "tps": 2.0, "jitter": {"kind": "uniform", "max_s": 5.0}},
    }
    report = run(resolve(base), seed=9).report
    assert report.spam["normalized"] is not None
    assert report.spam["normalized"] < 0.6
    assert report.spam["baseline_inclusions"] > report.spam["inclusions"]

import numpy as np
import pytest

from prismsim.config import ConfigError, resolve
from prismsim.netsim import (
    Simulation,
    Topology,
    build_topology,
    run,
    security_constraint,
    utilization_bound,
)


def small_cfg(**overrides):
    base = {
        "duration": 20.0,
        "topology": {"nodes": 6, "degree": 4, "delay_s": 0.12},
        "prism": {"m": 10, "rate_voter_per_chain": 0.5, "rate_tx": 1.0, "rate_prop": 0.25},
        "workload": {"tps": 10.0},
    }
    for key, value in overrides.items():
        if isinstance(value, dict):
            base[key] = {**base.get(key, {}), **value}
        else:
            base[key] = value
    return resolve(base)


def test_security_constraint_values():
    assert security_constraint(0.45) == pytest.approx(0.1 / 0.45)
    assert security_constraint(1 / 3) == pytest.approx(1.0)
    assert security_constraint(0.499) == pytest.approx(0.002 / 0.499)
    with pytest.raises(ValueError):
        security_constraint(0.5)


def test_utilization_bound_paper_point():
    # beta=0.45, h=5: at most ~4.4% of the bandwidth is usable
    max_f_delta = security_constraint(0.45)
    assert utilization_bound(max_f_delta, 1.0, 5.0) == pytest.approx(0.0444, abs=5e-4)


def test_topology_generators():
    ring = build_topology(resolve({"topology": {"kind": "ring", "nodes": 8}}), seed=0)
    assert len(ring.edges) == 8 and ring.diameter == 4
    complete = build_topology(resolve({"topology": {"kind": "complete", "nodes": 5}}), seed=0)
    assert len(complete.edges) == 10 and complete.diameter == 1
    regular = build_topology(
        resolve({"topology": {"kind": "regular", "nodes": 20, "degree": 4}}), seed=3
    )
    assert len(regular.edges) == 40
    degs = [0] * 20
    for u, v in regular.edges:
        degs[u] += 1
        degs[v] += 1
    assert all(d == 4 for d in degs)


def test_link_delay_formula_idle_link():
    sim = Simulation(small_cfg(topology={"kind": "complete", "nodes": 2, "delay_s": 0.12}), seed=0)
    size = int(0.01 * sim.topology.bandwidth)  # serializes in 10 ms
    arrival = sim._link_arrival(0, 1, size, now=5.0)
    assert arrival == pytest.approx(5.0 + 0.01 + 0.12)


def test_link_fifo_queueing_back_to_back():
    sim = Simulation(small_cfg(topology={"kind": "complete", "nodes": 2, "delay_s": 0.12}), seed=0)
    size = int(0.05 * sim.topology.bandwidth)
    first = sim._link_arrival(0, 1, size, now=1.0)
    second = sim._link_arrival(0, 1, size, now=1.0)
    assert first == pytest.approx(1.0 + 0.05 + 0.12)
    assert second == pytest.approx(1.0 + 0.10 + 0.12)  # waits for the first
    # reverse direction is an independent queue
    reverse = sim._link_arrival(1, 0, size, now=1.0)
    assert reverse == pytest.approx(1.0 + 0.05 + 0.12)


def test_single_node_grows_without_forking():
    cfg = small_cfg(topology={"kind": "complete", "nodes": 1}, workload={"tps": 5.0})
    report = run(cfg, seed=1).report
    assert report.blocks["total"] > 20
    assert report.forking["voter"] == 0.0
    assert report.forking["proposer"] == 0.0
    assert report.confirmation["max_confirmed_level"] >= 1


def test_deterministic_replay_bit_identical():
    cfg = small_cfg()
    first = run(cfg, seed=9).report
    second = run(cfg, seed=9).report
    assert first.deterministic_dict() == second.deterministic_dict()
    assert first.to_json() != "" and first.deterministic_dict() != run(cfg, seed=10).report.deterministic_dict()


def test_every_block_reaches_every_honest_node():
    cfg = small_cfg(duration=15.0)
    result = run(cfg, seed=4)
    sim = result.sim
    # quiesce: all mined blocks must be stored by all nodes at the end,
    # up to blocks mined too close to the end to propagate
    cutoff = sim.duration - 2.0
    for digest, mined_at in sim.mine_times.items():
        if mined_at > cutoff:
            continue
        for node in sim.nodes:
            assert node.state.has_block(digest), (digest.hex()[:8], node.id)
    # and no node holds unresolved orphans
    for node in sim.nodes:
        assert not node.state.orphans


def test_mean_block_delay_matches_network_model():
    """Measured propagation across a 20-node graph vs the h*(B/C + D) model."""
    cfg = resolve(
        {
            "duration": 40.0,
            "topology": {"nodes": 20, "degree": 4, "delay_s": 0.12},
            "prism": {"m": 20, "rate_voter_per_chain": 0.25, "rate_tx": 0.5, "rate_prop": 0.2},
            "workload": {"tps": 5.0},
        }
    )
    sim = Simulation(cfg, seed=6)
    first_arrival: dict[bytes, dict[int, float]] = {}

    node_on_block = sim.nodes[0].__class__.on_block

    def tracking_on_block(self, block, from_peer, now):
        first_arrival.setdefault(block.digest, {}).setdefault(self.id, now)
        return node_on_block(self, block, from_peer, now)

    for node in sim.nodes:
        node.on_block = tracking_on_block.__get__(node)
    sim.run()

    delays = []
    for digest, mined_at in sim.mine_times.items():
        times = first_arrival.get(digest)
        if times and mined_at < sim.duration - 3.0:
            delays.append(np.mean([t - mined_at for t in times.values()]))
    measured = float(np.mean(delays))
    sizes = cfg["sizes"]
    mean_block_bytes = np.mean(
        [  # voter blocks dominate the mix; use the observed sizes
            sizes["block_overhead_bytes"] + sizes["bytes_per_ref"] * 2
        ]
    )
    model = sim.topology.mean_hops * (mean_block_bytes / sim.topology.bandwidth + 0.12)
    assert abs(measured - model) / model < 0.2


def test_beta_guard_rejected_without_override():
    with pytest.raises(ConfigError) as err:
        resolve({"adversary": {"strategy": "censorship", "fraction": 0.6}})
    assert "beta" in str(err.value)
    cfg = resolve({"adversary": {"strategy": "censorship", "fraction": 0.6}, "allow_high_beta": True})
    assert cfg["adversary"]["fraction"] == 0.6


def test_disconnected_topology_impossible_by_construction():
    with pytest.raises(ConfigError):
        resolve({"topology": {"kind": "regular", "nodes": 7, "degree": 3}})  # odd product


def test_checkpoint_dump_schema():
    cfg = small_cfg(duration=10.0)
    result = run(cfg, seed=2)
    dump = result.sim.nodes[0].state.checkpoint()
    assert set(dump) == {"proposer", "voter_tips", "pools", "forking"}
    assert len(dump["voter_tips"]) == cfg["prism"]["m"]


def test_conservation_holds_at_every_checkpoint():
    from prismsim.ledger import total_value

    cfg = small_cfg(duration=20.0, workload={"tps": 20.0})
    sim = Simulation(cfg, seed=12)
    initial_total = total_value(sim.genesis_utxo)
    audits = []

    original_checkpoint = sim._handle_checkpoint

    def auditing_checkpoint(now):
        original_checkpoint(now)
        audits.append(
            total_value(sim.engine.utxo) == initial_total - sum(sim.engine.fees)
        )

    sim._handle_checkpoint = auditing_checkpoint
    sim.run()
    assert audits and all(audits)


def test_aggregate_mining_rate_preserved_by_rescheduling():
    # constant redraw on superblock changes must keep blocks/s at f
    cfg = small_cfg(duration=120.0, workload={"tps": 10.0})
    result = run(cfg, seed=21)
    f = (
        cfg["prism"]["rate_tx"]
        + cfg["prism"]["rate_prop"]
        + cfg["prism"]["m"] * cfg["prism"]["rate_voter_per_chain"]
    )
    expected = f * cfg["duration"]
    observed = result.report.blocks["total"]
    assert abs(observed - expected) < 3 * np.sqrt(expected)


def test_paper_shape_profile_runs_with_thousand_chains():
    cfg = resolve({"duration": 6.0, "workload": {"tps": 5.0}}, profile="paper-shape")
    assert cfg["prism"]["m"] == 1000
    result = run(cfg, seed=2)
    assert result.report.blocks["voter"] > 50
    assert result.report.invalid_blocks == 0
    # sortition proofs over 1002 committed slots carry 10 siblings
    voter_block = next(
        b for b in result.sim.blocks_by_digest.values() if b.block_type.kind == "voter"
    )
    assert len(voter_block.parent_proof.siblings) == 10


def test_report_schema_fully_populated():
    cfg = small_cfg(duration=10.0)
    report = run(cfg, seed=1).report.to_dict()
    expected_keys = {
        "protocol", "seed", "config_digest", "duration", "steady_state_start",
        "topology", "blocks", "throughput", "latency", "forking",
        "confirmation", "attack", "spam", "mempool_final", "invalid_blocks",
        "conservation_ok", "wallclock",
    }
    assert set(report) == expected_keys
    assert set(report["forking"]) == {"voter", "proposer", "chain"}
    assert set(report["throughput"]) == {
        "generated_tps", "confirmed_raw_tps", "confirmed_sanitized_tps",
    }

"""Seeded deterministic discrete-event network simulator.

Time is continuous double-precision seconds; events are processed in
(time, sequence) order, the sequence counter breaking ties.  Every
random stream derives from (seed, purpose, node id), so a (config, seed)
pair reproduces the identical event trace on any host.

Block relay is push-on-first-receipt gossip with full blocks.  A block
sent over a link is serialized at the sender's egress (FIFO per link at
the configured bandwidth) and then propagates for the link delay.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .blocks import (
    PROPOSER,
    TRANSACTION,
    VOTER,
    Block,
    SortitionParams,
    ValidationError,
    validate_block,
)
from .chain import ChainState, TxRejected
from .confirmation import ConfirmationEngine
from .crypto import get_scheme
from .ledger import Transaction, TxInput, TxOutput, Utxo, signed_transaction
from .mining import finish_mining, honest_context, schedule_mining
from .metrics import MetricsReport

# event kinds
MINE = 0
ARRIVE = 1
TX = 2
CHECKPOINT = 3
FETCH = 4
SPAM = 5

FETCH_REQUEST_BYTES = 100


def utilization_bound(f: float, delta: float, h: float) -> float:
    """Upper bound on bandwidth utilization: blocks in flight per hop."""
    if f <= 0 or delta <= 0 or h <= 0:
        raise ValueError("f, delta and h must be > 0")
    return f * delta / h


def security_constraint(beta: float) -> float:
    """Maximum tolerable blocks-in-flight (f*delta) for a given adversary share."""
    if not 0.0 < beta < 0.5:
        raise ValueError("beta must lie in (0, 0.5)")
    return (1.0 - 2.0 * beta) / beta


@dataclass(frozen=True)
class Topology:
    n: int
    edges: tuple[tuple[int, int], ...]
    delay_s: float
    bandwidth: float
    diameter: int
    mean_hops: float

    def neighbors(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            out[u].append(v)
            out[v].append(u)
        return out


def build_topology(cfg: dict, seed: int) -> Topology:
    topo = cfg["topology"]
    n = topo["nodes"]
    kind = topo["kind"]
    if kind == "complete" or n == 1:
        graph = nx.complete_graph(n)
    elif kind == "ring":
        graph = nx.cycle_graph(n)
    else:
        rng_seed = int(np.random.default_rng([seed, 0xA11CE]).integers(2**31))
        graph = nx.random_regular_graph(topo["degree"], n, seed=rng_seed)
        attempts = 0
        while not nx.is_connected(graph):
            attempts += 1
            graph = nx.random_regular_graph(topo["degree"], n, seed=rng_seed + attempts)
    if n > 1 and not nx.is_connected(graph):
        raise ValueError("topology: graph is not connected")
    if n == 1:
        diameter, mean_hops = 0, 0.0
    else:
        lengths = dict(nx.all_pairs_shortest_path_length(graph))
        pairs = [lengths[u][v] for u in graph for v in graph if u < v]
        diameter = max(pairs)
        mean_hops = float(np.mean(pairs))
    return Topology(
        n=n,
        edges=tuple((min(u, v), max(u, v)) for u, v in graph.edges()),
        delay_s=topo["delay_s"],
        bandwidth=topo["bandwidth_bytes_per_s"],
        diameter=diameter,
        mean_hops=mean_hops,
    )


def block_wire_size(block: Block, sizes: dict) -> int:
    """Size for the delay model: payload-count based, fixed overhead."""
    if block.block_type.kind == TRANSACTION:
        return sizes["block_overhead_bytes"] + sizes["bytes_per_tx"] * len(block.content.txs)
    if block.block_type.kind == PROPOSER:
        refs = len(block.content.prp_refs) + len(block.content.tx_refs)
        return sizes["block_overhead_bytes"] + sizes["bytes_per_ref"] * refs
    return sizes["block_overhead_bytes"] + sizes["bytes_per_ref"] * len(block.content.votes)


class Node:
    """Honest Prism node: chain state, miner, gossip relay."""

    def __init__(self, node_id: int, sim: "Simulation", hash_power: float, adversarial: bool):
        self.id = node_id
        self.sim = sim
        self.hash_power = hash_power
        self.adversarial = adversarial
        self.state = ChainState(sim.params.m, vote_rule=sim.cfg["prism"]["vote_rule"])
        self.rng = np.random.default_rng([sim.seed, 1, node_id])
        self.jitter_rng = np.random.default_rng([sim.seed, 3, node_id])
        self.mining_epoch = 0
        self.strategy = None  # set by the adversary module when applicable

    # --- mining ----------------------------------------------------------------

    def reschedule_mining(self, now: float) -> None:
        """Superblock changed: invalidate the pending completion, redraw."""
        self.mining_epoch += 1
        when = schedule_mining(self.hash_power, self.sim.params.total_rate, now, self.rng)
        if when is not None:
            self.sim.push(when, MINE, (self.id, self.mining_epoch))

    def build_context(self, now: float):
        if self.strategy is not None:
            ctx = self.strategy.build_context(now)
            if ctx is not None:
                return ctx
        return honest_context(
            self.state, self.id, self.hash_power, now, self.sim.tx_capacity
        )

    def on_mining_complete(self, now: float, epoch: int) -> None:
        if epoch != self.mining_epoch:
            return  # superseded by a superblock change
        ctx = self.build_context(now)
        block = finish_mining(
            ctx, self.sim.params, float(self.rng.random()), int(self.rng.integers(2**62))
        )
        self.sim.record_mined(block, now, self.id)
        if self.strategy is None:
            self.state.receive_block(block)
            self.sim.broadcast(self.id, block, now, exclude=None)
        else:
            # withholding strategies return [] here and the backlog later
            self.publish(self.strategy.handle_mined(block, now), now)
        self.reschedule_mining(now)

    def publish(self, blocks, now: float) -> None:
        for block in blocks:
            self.state.receive_block(block)
            self.sim.broadcast(self.id, block, now, exclude=None)

    # --- receipt -----------------------------------------------------------------

    def on_block(self, block: Block, from_peer: int, now: float) -> None:
        if self.state.has_block(block.digest) or block.digest in self.state.orphan_digests:
            return
        try:
            validate_block(block, self.sim.params, self.sim.scheme)
        except ValidationError:
            self.sim.invalid_blocks += 1
            return
        changes = self.state.receive_block(block)
        if changes == ["duplicate"]:
            return
        # gossip: forward on first receipt, even while parents are missing
        self.sim.broadcast(self.id, block, now, exclude=from_peer)
        for change in changes:
            if change.startswith("request_parent:"):
                self.sim.push_fetch(self.id, from_peer, change.split(":", 1)[1], now)
        if self.strategy is not None:
            self.publish(self.strategy.handle_block(block, changes, now), now)
        self.reschedule_mining(now)

    def on_transaction(self, tx: Transaction, now: float) -> None:
        release = now + self.draw_jitter()
        result = self.state.receive_transaction(tx, now, self.sim.scheme, release_time=release)
        if not isinstance(result, TxRejected):
            self.reschedule_mining(now)

    def draw_jitter(self) -> float:
        jitter = self.sim.cfg["spam"]["jitter"]
        kind = jitter["kind"]
        if kind == "uniform":
            return float(self.jitter_rng.uniform(0.0, jitter["max_s"]))
        if kind == "exponential":
            return float(self.jitter_rng.exponential(jitter["mean_s"]))
        return 0.0


class Simulation:
    """One deterministic Prism run over a topology."""

    def __init__(self, cfg: dict, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.scheme = get_scheme(cfg["signature_scheme"])
        prism = cfg["prism"]
        self.params = SortitionParams(
            m=prism["m"],
            rate_tx=prism["rate_tx"],
            rate_prop=prism["rate_prop"],
            rate_voter=prism["rate_voter_per_chain"],
        )
        self.tx_capacity = prism["tx_block_capacity"]
        self.topology = build_topology(cfg, seed)
        self.neighbors = self.topology.neighbors()
        self.duration = cfg["duration"]

        self.now = 0.0
        self.heap: list = []
        self.seq = 0
        # directed per-link FIFO egress: (u, v) -> time the link frees up
        self.link_free: dict[tuple[int, int], float] = {}

        honest_flags = self._assign_adversaries()
        powers = self._assign_powers(honest_flags)
        self.nodes = [
            Node(i, self, powers[i], not honest_flags[i]) for i in range(self.topology.n)
        ]
        self.observer = next(i for i in range(self.topology.n) if honest_flags[i])

        self.workload_rng = np.random.default_rng([seed, 2])
        self.wallets = [
            self.scheme.keypair(b"wallet" + i.to_bytes(4, "little"))
            for i in range(cfg["workload"]["wallets"])
        ]
        self.genesis_utxo = self._build_genesis_utxo()
        self._unused_coins = list(self.genesis_utxo.values())
        self._next_coin = 0

        self.engine = ConfirmationEngine(
            self.nodes[self.observer].state,
            beta=prism["beta"],
            epsilon=prism["epsilon"],
            scheme=self.scheme,
            initial_utxo=self.genesis_utxo,
            mine_time_of=lambda digest: self.mine_times.get(digest, 0.0),
        )

        self.mine_times: dict[bytes, float] = {}
        self.block_counts = {TRANSACTION: 0, PROPOSER: 0, VOTER: 0}
        self.blocks_by_digest: dict[bytes, Block] = {}
        self.generated_txs = 0
        self.invalid_blocks = 0
        self.spam_tx_digests: set[bytes] = set()
        self.spam_sets = 0
        self.spam_inclusions = 0
        self.timeseries: list[dict] = []

    # --- setup -----------------------------------------------------------------

    def _assign_adversaries(self) -> list[bool]:
        adv = self.cfg["adversary"]
        n = self.topology.n
        honest = [True] * n
        if adv["strategy"] in ("censorship", "balancing"):
            count = round(adv["fraction"] * n)
            for i in range(n - count, n):
                honest[i] = False
        elif adv["strategy"] == "private_double_spend" and adv["fraction"] > 0:
            honest[n - 1] = False
        return honest

    def _assign_powers(self, honest_flags: list[bool]) -> list[float]:
        adv = self.cfg["adversary"]
        n = self.topology.n
        if adv["strategy"] == "private_double_spend" and adv["fraction"] > 0:
            # co-located adversary: one node holds the whole fraction
            beta = adv["fraction"]
            honest_count = n - 1
            return [beta if not honest_flags[i] else (1.0 - beta) / honest_count for i in range(n)]
        return [1.0 / n] * n

    def _build_genesis_utxo(self) -> dict:
        wl = self.cfg["workload"]
        spam = self.cfg["spam"]
        expected = int(math.ceil(wl["tps"] * self.duration * 1.25)) + 10
        if spam["enabled"]:
            expected += int(math.ceil(spam["tps"] * self.duration * 1.25)) + 10
        count = wl["genesis_coins"] or expected
        utxo = {}
        for i in range(count):
            owner = self.wallets[i % len(self.wallets)]
            coin = Utxo(b"genesis-coin" + i.to_bytes(8, "little") + bytes(12), 0, wl["coin_value"], owner.public)
            utxo[coin.id] = coin
        return utxo

    # --- event plumbing -----------------------------------------------------------

    def push(self, time: float, kind: int, payload) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (time, self.seq, kind, payload))

    def push_fetch(self, requester: int, peer: int, digest_hex: str, now: float) -> None:
        arrival = self._link_arrival(requester, peer, FETCH_REQUEST_BYTES, now)
        self.push(arrival, FETCH, (peer, requester, bytes.fromhex(digest_hex)))

    def _link_arrival(self, sender: int, receiver: int, size: int, now: float) -> float:
        """Egress serialization (FIFO per directed link) plus propagation."""
        key = (sender, receiver)
        start = max(now, self.link_free.get(key, 0.0))
        done = start + size / self.topology.bandwidth
        self.link_free[key] = done
        return done + self.topology.delay_s

    def send_block(self, sender: int, receiver: int, block: Block, now: float) -> None:
        size = block_wire_size(block, self.cfg["sizes"])
        arrival = self._link_arrival(sender, receiver, size, now)
        self.push(arrival, ARRIVE, (receiver, block, sender))

    def broadcast(self, sender: int, block: Block, now: float, exclude: int | None) -> None:
        for peer in self.neighbors[sender]:
            if peer != exclude:
                self.send_block(sender, peer, block, now)

    # --- bookkeeping ----------------------------------------------------------------

    def record_mined(self, block: Block, now: float, miner: int) -> None:
        self.mine_times[block.digest] = now
        self.block_counts[block.block_type.kind] += 1
        self.blocks_by_digest[block.digest] = block
        if block.block_type.kind == TRANSACTION and self.spam_tx_digests:
            for tx in block.content.txs:
                if tx.digest in self.spam_tx_digests:
                    self.spam_inclusions += 1

    # --- workload --------------------------------------------------------------------

    def _honest_ids(self) -> list[int]:
        return [n.id for n in self.nodes if not n.adversarial]

    def _schedule_workload(self) -> None:
        tps = self.cfg["workload"]["tps"]
        if tps > 0:
            self.push(float(self.workload_rng.exponential(1.0 / tps)), TX, None)
        spam = self.cfg["spam"]
        if spam["enabled"]:
            self.push(float(self.workload_rng.exponential(1.0 / spam["tps"])), SPAM, None)

    def _next_payment(self) -> Transaction | None:
        if self._next_coin >= len(self._unused_coins):
            return None
        coin = self._unused_coins[self._next_coin]
        self._next_coin += 1
        owner = next(w for w in self.wallets if w.public == coin.owner)
        recipient = self.wallets[int(self.workload_rng.integers(len(self.wallets)))]
        return signed_transaction(
            self.scheme,
            [TxInput(*coin.id)],
            [TxOutput(coin.value, recipient.public)],
            [owner],
        )

    def _handle_tx_event(self, now: float) -> None:
        tx = self._next_payment()
        tps = self.cfg["workload"]["tps"]
        self.push(now + float(self.workload_rng.exponential(1.0 / tps)), TX, None)
        if tx is None:
            return
        self.generated_txs += 1
        # users cannot tell honest miners apart, so payments go everywhere;
        # transactions are not gossiped, only the chosen miner sees this one
        node = self.nodes[int(self.workload_rng.integers(len(self.nodes)))]
        node.on_transaction(tx, now)

    def _handle_spam_event(self, now: float) -> None:
        """One conflict set: distinct spends of one coin, delivered to all
        victims simultaneously."""
        spam = self.cfg["spam"]
        self.push(now + float(self.workload_rng.exponential(1.0 / spam["tps"])), SPAM, None)
        if self._next_coin >= len(self._unused_coins):
            return
        coin = self._unused_coins[self._next_coin]
        self._next_coin += 1
        owner = next(w for w in self.wallets if w.public == coin.owner)
        victims = self._honest_ids()
        if spam["victims"]:
            victims = victims[: spam["victims"]]
        self.spam_sets += 1
        for i, victim in enumerate(victims):
            # one distinct recipient per victim keeps the variants distinct
            recipient = self.scheme.keypair(b"spam-sink" + i.to_bytes(4, "little"))
            variant = signed_transaction(
                self.scheme,
                [TxInput(*coin.id)],
                [TxOutput(coin.value, recipient.public)],
                [owner],
            )
            self.spam_tx_digests.add(variant.digest)
            self.nodes[victim].on_transaction(variant, now)

    # --- main loop ----------------------------------------------------------------------

    def run(self) -> "RunResult":
        for node in self.nodes:
            if node.strategy is not None:
                node.strategy.attach(self, node)
            node.reschedule_mining(0.0)
        self._schedule_workload()
        self.push(self.cfg["checkpoint_interval"], CHECKPOINT, None)

        heap = self.heap
        while heap:
            time, _, kind, payload = heapq.heappop(heap)
            if time > self.duration:
                break
            self.now = time
            if kind == ARRIVE:
                receiver, block, sender = payload
                self.nodes[receiver].on_block(block, sender, time)
            elif kind == MINE:
                node_id, epoch = payload
                self.nodes[node_id].on_mining_complete(time, epoch)
            elif kind == TX:
                self._handle_tx_event(time)
            elif kind == CHECKPOINT:
                self._handle_checkpoint(time)
            elif kind == SPAM:
                self._handle_spam_event(time)
            elif kind == FETCH:
                peer, requester, digest = payload
                found = self.nodes[peer].state.get_block(digest)
                if found is not None:
                    self.send_block(peer, requester, found, time)
        self.now = self.duration
        self.engine.evaluate(self.duration)
        self._record_timeseries(self.duration)
        return self._finish()

    def _handle_checkpoint(self, now: float) -> None:
        self.engine.evaluate(now)
        self._record_timeseries(now)
        self.push(now + self.cfg["checkpoint_interval"], CHECKPOINT, None)

    def _record_timeseries(self, now: float) -> None:
        state = self.nodes[self.observer].state
        self.timeseries.append(
            {
                "time": now,
                "confirmed_raw": self.engine.raw_count,
                "confirmed_sanitized": self.engine.sanitized_count,
                "max_confirmed_level": len(self.engine.leaders),
                "alpha_voter": state.voter_fork_rate(),
                "alpha_proposer": state.proposer_fork_rate(),
                "mempool": len(state.mempool),
                "blocks_mined": sum(self.block_counts.values()),
            }
        )

    def _finish(self) -> "RunResult":
        report = MetricsReport.from_simulation(self)
        return RunResult(report=report, sim=self)


@dataclass
class RunResult:
    report: MetricsReport
    sim: Simulation


def run(cfg: dict, seed: int) -> RunResult:
    """Run one experiment; dispatches on the protocol field."""
    if cfg["protocol"] == "longest_chain":
        from .baseline import LongestChainSimulation

        return LongestChainSimulation(cfg, seed).run()
    sim = Simulation(cfg, seed)
    if cfg["adversary"]["strategy"] != "none" and cfg["adversary"]["fraction"] > 0:
        from .adversary import install_strategies

        install_strategies(sim)
    result = sim.run()
    spam = cfg["spam"]
    if spam["enabled"] and spam["normalize"] and spam["jitter"]["kind"] != "none":
        # normalized spam compares against the no-jitter twin of the same seed
        twin_cfg = {**cfg, "spam": {**spam, "jitter": {**spam["jitter"], "kind": "none"}, "normalize": False}}
        twin = run(twin_cfg, seed)
        result.report.spam["baseline_inclusions"] = twin.report.spam["inclusions"]
        base = twin.report.spam["inclusions"]
        result.report.spam["normalized"] = (
            result.report.spam["inclusions"] / base if base else None
        )
    elif spam["enabled"]:
        result.report.spam["baseline_inclusions"] = result.report.spam["inclusions"]
        result.report.spam["normalized"] = 1.0 if result.report.spam["inclusions"] else None
    return result

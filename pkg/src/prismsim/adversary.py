"""Adversarial mining strategies.

Every strategy produces structurally valid blocks through the regular
mining path; attacks differ only in which parents they extend, what the
blocks say, and when they are published.  A strategy's ``handle_*``
hooks return the blocks to publish now: withholding strategies return
nothing until release, then the whole backlog.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .blocks import Block, PROPOSER, TRANSACTION, VOTER
from .mining import MinerContext, honest_context


class Strategy:
    name = "honest"

    def attach(self, sim, node) -> None:
        self.sim = sim
        self.node = node

    def build_context(self, now: float) -> MinerContext | None:
        return None  # honest assembly

    def handle_mined(self, block: Block, now: float) -> list[Block]:
        return [block]

    def handle_block(self, block: Block, changes: list[str], now: float) -> list[Block]:
        return []


class CensorshipStrategy(Strategy):
    """Mine structurally valid but empty transaction and proposer content;
    vote and extend chains honestly otherwise."""

    name = "censorship"

    def build_context(self, now: float) -> MinerContext:
        node = self.node
        ctx = honest_context(node.state, node.id, node.hash_power, now, self.sim.tx_capacity)
        ctx.txs = []
        ctx.unref_prp_refs = ()
        ctx.unref_tx_refs = ()
        return ctx


class BalancingStrategy(Strategy):
    """Keep proposer levels contested: mine a competitor wherever a level
    has a single candidate, and always vote for the runner-up."""

    name = "balancing"

    def __init__(self, mine_competitors: bool = True):
        self.mine_competitors = mine_competitors

    def _runner_up(self, level: int) -> bytes | None:
        state = self.node.state
        candidates = state.prp_by_level.get(level)
        if not candidates:
            return None
        counts = state.votes_by_level.get(level, {})
        ranked = sorted(
            candidates, key=lambda d: (-counts.get(d, 0), candidates.index(d))
        )
        return ranked[1] if len(ranked) >= 2 else ranked[0]

    def build_context(self, now: float) -> MinerContext:
        node = self.node
        state = node.state
        ctx = honest_context(node.state, node.id, node.hash_power, now, self.sim.tx_capacity)
        for i in range(state.m):
            votes = []
            for level in state.unvoted_levels(i):
                choice = self._runner_up(level)
                if choice is not None:
                    votes.append((level, choice))
            ctx.votes[i] = votes
        if self.mine_competitors:
            top = state.prp_parent_level
            if top >= 1 and len(state.prp_by_level.get(top, ())) == 1:
                # retarget the proposer sub-block to compete at the top level
                existing = state.prp_entries[state.prp_by_level[top][0]]
                ctx.prp_parent = existing.parent
                ctx.prp_parent_level = top - 1
                ctx.unref_prp_refs = tuple(
                    d for d in ctx.unref_prp_refs if d != existing.parent
                )
        return ctx


@dataclass
class _PrivateFork:
    base_public_len: int
    tip: bytes
    length: int
    voted: set[int] = field(default_factory=set)


class PrivateDoubleSpendStrategy(Strategy):
    """Withhold a competing proposer block at the target level and race
    every voter chain privately to shift votes onto it.

    Release fires when the private chain is strictly longer than the
    public one (so it wins the fork choice) and votes for the private
    candidate on at least m/2 + margin chains, or at the timeout.
    """

    name = "private_double_spend"

    def __init__(self, target_level: int, release_margin: int, release_timeout: float):
        self.target_level = target_level
        self.release_margin = release_margin
        self.release_timeout = release_timeout
        self.phase = "waiting"
        self.private_block: Block | None = None
        self.forks: dict[int, _PrivateFork] = {}
        self.withheld: list[Block] = []
        self.released = False

    # --- fork bookkeeping -------------------------------------------------------

    def _fork(self, chain: int) -> _PrivateFork:
        fork = self.forks.get(chain)
        if fork is not None:
            return fork
        tree = self.node.state.voter_trees[chain]
        base = tree.tip
        base_len = tree.tip_chainlen
        voted = {level for level in tree.main_votes}
        target_vote = tree.main_votes.get(self.target_level)
        if target_vote is not None:
            # fork below the public vote for the target level so the
            # private chain can recast it
            _, vote_chainlen = target_vote
            digest = tree.tip
            while digest != tree.genesis:
                entry = tree.entries[digest]
                if entry.chainlen == vote_chainlen:
                    base = entry.parent
                    base_len = entry.chainlen - 1
                    break
                digest = entry.parent
            voted = {
                level
                for level, (_, clen) in tree.main_votes.items()
                if clen <= base_len
            }
        fork = _PrivateFork(base_public_len=base_len, tip=base, length=base_len, voted=voted)
        self.forks[chain] = fork
        return fork

    def _private_votes(self, chain: int) -> list[tuple[int, bytes]]:
        state = self.node.state
        fork = self._fork(chain)
        votes = []
        for level in range(1, state.prp_parent_level + 1):
            if level in fork.voted:
                continue
            if level == self.target_level:
                if self.private_block is not None:
                    votes.append((level, self.private_block.digest))
            else:
                choice = state.first_seen_at(level)
                if choice is not None:
                    votes.append((level, choice))
        return votes

    # --- mining ------------------------------------------------------------------

    def build_context(self, now: float) -> MinerContext | None:
        if self.phase == "waiting":
            return None
        node = self.node
        state = node.state
        ctx = honest_context(state, node.id, node.hash_power, now, self.sim.tx_capacity)
        ctx.vt_parent = [self._fork(i).tip for i in range(state.m)]
        ctx.votes = [self._private_votes(i) for i in range(state.m)]
        if self.private_block is None:
            public = state.prp_by_level.get(self.target_level)
            if public:
                existing = state.prp_entries[public[0]]
                ctx.prp_parent = existing.parent
                ctx.prp_parent_level = self.target_level - 1
                ctx.unref_prp_refs = tuple(
                    d for d in ctx.unref_prp_refs if d != existing.parent
                )
        return ctx

    def handle_mined(self, block: Block, now: float) -> list[Block]:
        if self.phase == "waiting":
            return [block]
        kind = block.block_type.kind
        if kind == TRANSACTION:
            return [block] + self._maybe_release(now)
        if kind == PROPOSER:
            if (
                self.phase == "attacking"
                and self.private_block is None
                and block.level == self.target_level
            ):
                self.private_block = block
                self.withheld.append(block)
                return self._maybe_release(now)
            return [block] + self._maybe_release(now)
        chain = block.block_type.chain_index
        fork = self._fork(chain)
        fork.tip = block.digest
        fork.length += 1
        fork.voted.update(level for level, _ in block.content.votes)
        if self.phase == "released":
            return [block]
        self.withheld.append(block)
        return self._maybe_release(now)

    # --- public events --------------------------------------------------------------

    def handle_block(self, block: Block, changes: list[str], now: float) -> list[Block]:
        if self.phase == "waiting":
            if any(f"new_proposer_level:{self.target_level}" == c for c in changes) or (
                self.node.state.prp_by_level.get(self.target_level)
            ):
                self.phase = "attacking"
            return []
        return self._maybe_release(now)

    def _winning_chains(self) -> int:
        state = self.node.state
        count = 0
        for i, fork in self.forks.items():
            if self.target_level not in fork.voted:
                continue
            if fork.length > state.voter_trees[i].tip_chainlen:
                count += 1
        return count

    def _maybe_release(self, now: float) -> list[Block]:
        if self.phase != "attacking" or not self.withheld:
            return []
        threshold = self.node.state.m / 2 + self.release_margin
        if self._winning_chains() >= threshold or now >= self.release_timeout:
            self.phase = "released"
            self.released = True
            backlog = self.withheld
            self.withheld = []
            return backlog
        return []


def install_strategies(sim) -> None:
    """Instantiate the configured strategy on every adversarial node."""
    adv = sim.cfg["adversary"]
    for node in sim.nodes:
        if not node.adversarial:
            continue
        if adv["strategy"] == "censorship":
            node.strategy = CensorshipStrategy()
        elif adv["strategy"] == "balancing":
            node.strategy = BalancingStrategy(mine_competitors=adv["mine_competitors"])
        elif adv["strategy"] == "private_double_spend":
            node.strategy = PrivateDoubleSpendStrategy(
                target_level=adv["target_level"],
                release_margin=adv["release_margin"],
                release_timeout=adv["release_timeout_fraction"] * sim.cfg["duration"],
            )


def spam_bound_exponential(rate: float, delta: float) -> float:
    """Upper bound on normalized spam under exponential jitter: the chance
    another node's jitter lands within one network delay of the first."""
    if rate < 0 or delta < 0:
        raise ValueError("rate and delta must be >= 0")
    import math

    return 1.0 - math.exp(-rate * delta)

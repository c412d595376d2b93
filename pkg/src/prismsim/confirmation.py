"""Confidence-interval confirmation, leader election and ledger formation.

The rule bounds, for every proposer candidate at a level, the number of
its votes that will stay permanent, assuming an adversary with hash
fraction ``beta`` races each voter chain privately.  A leader confirms
when its lower vote bound beats every other candidate's upper bound and
the bound on a fully private, unreleased candidate.

Poisson terms are accumulated iteratively in log space so the numbers
stay stable for private-chain depth estimates up to 1e4 (absolute error
below 1e-12 against a reference CDF).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable, Iterable

from scipy.special import ndtri

from .chain import ChainState
from .crypto import SignatureScheme
from .ledger import CoinId, Transaction, Utxo, execute, APPLIED, sanitize
from .serialize import hex_digest


class ConfirmationError(Exception):
    pass


class MissingBlockError(ConfirmationError):
    """A referenced block is not in the local store; sync before building."""


class ListDecodingCapExceeded(ConfirmationError):
    """The proposer-set cross product exceeds the configured ledger cap."""


def adversary_depth(mean_depth: float, fork_rate: float, beta: float) -> float:
    """Estimated average depth of a private voter chain racing the public one.

    The public mean vote depth proxies the time since the candidate was
    released; scaling by the hash-power ratio and correcting for public
    forking gives the expected private progress in the same time.
    """
    if not 0.0 <= fork_rate < 1.0:
        raise ValueError("fork rate must lie in [0, 1)")
    if not 0.0 < beta < 0.5:
        raise ValueError("beta must lie in (0, 0.5)")
    if mean_depth < 0:
        raise ValueError("mean depth must be >= 0")
    return beta * mean_depth / ((1.0 - fork_rate) * (1.0 - beta))


def _poisson_pmf_prefix(lam: float, d: int) -> list[float]:
    """Poisson pmf values f(0..d; lam), accumulated in log space."""
    if lam < 0:
        raise ValueError("rate must be >= 0")
    if lam == 0.0:
        return [1.0] + [0.0] * d
    log_lam = math.log(lam)
    terms = []
    log_f = -lam
    for k in range(d + 1):
        if k > 0:
            log_f += log_lam - math.log(k)
        terms.append(math.exp(log_f))
    return terms


def vote_permanence(depth: int, private_depth: float, beta: float) -> float:
    """Probability that a vote at this main-chain depth is never reverted.

    Cumulative Poisson mass that the private chain is still behind, minus
    the catch-up mass: for a private chain of length k the adversary must
    still win a deficit of depth + 1 - k, which it does with probability
    (beta / (1 - beta)) ** (depth + 1 - k).
    """
    if depth < 1:
        raise ValueError("vote depth must be >= 1")
    if private_depth < 0:
        raise ValueError("private depth must be >= 0")
    if not 0.0 < beta < 0.5:
        raise ValueError("beta must lie in (0, 0.5)")
    ratio = beta / (1.0 - beta)
    log_ratio = math.log(ratio)
    pmf = _poisson_pmf_prefix(private_depth, depth)
    cdf = 0.0
    catch_up = 0.0
    for k, f_k in enumerate(pmf):
        cdf += f_k
        if f_k > 0.0:
            catch_up += math.exp(math.log(f_k) + (depth + 1 - k) * log_ratio)
    return min(1.0, max(0.0, cdf - catch_up))


def quantile_radius(epsilon: float, allow_fallback: bool = True) -> float:
    """Multiplier r such that mu - r * sigma approximates the epsilon-quantile.

    Uses the closed-form approximation of the normal quantile; for
    epsilon too large for that form the exact inverse CDF is used
    instead (or a ValueError is raised when the fallback is disabled).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    log_inv = math.log(1.0 / epsilon**2)
    # the closed form only tracks the lower tail: require ln(1/eps^2) > 1
    # and a positive radicand, otherwise fall back to the exact quantile
    if log_inv <= 1.0 or log_inv - math.log(log_inv) - math.log(2 * math.pi) <= 0.0:
        if not allow_fallback:
            raise ValueError(
                f"epsilon={epsilon} too large for the closed-form quantile; "
                "use the exact inverse-CDF fallback"
            )
        return float(-ndtri(epsilon))
    return math.sqrt(log_inv - math.log(log_inv) - math.log(2 * math.pi))


@dataclass(frozen=True)
class VoteCandidate:
    digest: bytes
    depths: tuple[int, ...]  # main-chain depth of each vote

    @property
    def votes(self) -> int:
        return len(self.depths)


@dataclass(frozen=True)
class VoteTally:
    """All votes cast on one proposer level, plus confirmation parameters."""

    level: int
    candidates: tuple[VoteCandidate, ...]
    fork_rate: float
    beta: float
    epsilon: float
    m: int

    def __post_init__(self):
        if sum(c.votes for c in self.candidates) > self.m:
            raise ValueError("more votes than voter chains")

    @property
    def mean_depth(self) -> float:
        total = sum(c.votes for c in self.candidates)
        if total == 0:
            return 0.0
        return sum(sum(c.depths) for c in self.candidates) / total


@dataclass(frozen=True)
class CandidateBounds:
    digest: bytes
    votes: int
    mu: float
    sigma: float
    lower: float
    upper: float


@dataclass(frozen=True)
class ConfidenceBounds:
    candidates: tuple[CandidateBounds, ...]
    adversary_upper: float


def candidate_stats(
    depths: Iterable[int], private_depth: float, beta: float
) -> tuple[float, float]:
    """Mean and standard deviation of a candidate's permanent-vote count,
    modelling each vote as an independent Bernoulli of its permanence."""
    memo: dict[int, float] = {}
    mu = 0.0
    var = 0.0
    for d in depths:
        p = memo.get(d)
        if p is None:
            p = vote_permanence(d, private_depth, beta)
            memo[d] = p
        mu += p
        var += p * (1.0 - p)
    return mu, math.sqrt(var)


def candidate_lower_bound(
    depths: Iterable[int], private_depth: float, beta: float, epsilon: float
) -> float:
    """Epsilon-quantile lower bound on permanent votes, floored at zero."""
    mu, sigma = candidate_stats(depths, private_depth, beta)
    return max(0.0, mu - sigma * quantile_radius(epsilon))


def confidence_bounds(tally: VoteTally) -> ConfidenceBounds:
    """Per-candidate permanent-vote bounds plus the private-block bound.

    Lower bounds are floored at zero before the adversary's remainder is
    computed, so the private bound never exceeds m.
    """
    radius = quantile_radius(tally.epsilon)
    private_depth = adversary_depth(tally.mean_depth, tally.fork_rate, tally.beta)
    partial = []
    for cand in tally.candidates:
        mu, sigma = candidate_stats(cand.depths, private_depth, tally.beta)
        lower = max(0.0, mu - sigma * radius)
        partial.append((cand, mu, sigma, lower))
    adversary_upper = tally.m - sum(lower for *_ , lower in partial)
    bounds = tuple(
        CandidateBounds(
            digest=cand.digest,
            votes=cand.votes,
            mu=mu,
            sigma=sigma,
            lower=lower,
            upper=lower + adversary_upper,
        )
        for cand, mu, sigma, lower in partial
    )
    return ConfidenceBounds(candidates=bounds, adversary_upper=adversary_upper)


@dataclass(frozen=True)
class LeaderDecision:
    confirmed: bool
    leader: bytes | None
    bounds: ConfidenceBounds


@dataclass(frozen=True)
class ProposerSetDecision:
    confirmed: bool
    candidates: tuple[bytes, ...]
    bounds: ConfidenceBounds


def try_confirm_leader(tally: VoteTally) -> LeaderDecision:
    """Confirm the most-voted candidate when its lower bound clears every
    other candidate's upper bound and the private-block bound.

    Vote-count ties break toward the smaller digest.
    """
    bounds = confidence_bounds(tally)
    if not bounds.candidates:
        return LeaderDecision(False, None, bounds)
    leader = min(bounds.candidates, key=lambda c: (-c.votes, c.digest))
    for other in bounds.candidates:
        if other.digest != leader.digest and leader.lower <= other.upper:
            return LeaderDecision(False, leader.digest, bounds)
    if leader.lower <= bounds.adversary_upper:
        return LeaderDecision(False, leader.digest, bounds)
    return LeaderDecision(True, leader.digest, bounds)


def try_confirm_proposer_set(tally: VoteTally) -> ProposerSetDecision:
    """List-decoding variant: every candidate whose upper bound reaches the
    best lower bound, confirmed once no unreleased private block can enter."""
    bounds = confidence_bounds(tally)
    if not bounds.candidates:
        return ProposerSetDecision(False, (), bounds)
    best_lower = max(c.lower for c in bounds.candidates)
    if bounds.adversary_upper >= best_lower:
        return ProposerSetDecision(False, (), bounds)
    members = tuple(
        c.digest for c in bounds.candidates if c.upper >= best_lower
    )
    return ProposerSetDecision(True, members, bounds)


def make_tally(state: ChainState, level: int, beta: float, epsilon: float) -> VoteTally:
    """Collect main-chain votes and depths for one level of a node's view.

    The fork rate is the instantaneous empirical rate across the node's
    voter trees at call time.
    """
    depths: dict[bytes, list[int]] = {}
    for tree in state.voter_trees:
        hit = tree.vote_and_depth(level)
        if hit is not None:
            digest, depth = hit
            depths.setdefault(digest, []).append(depth)
    order = {d: i for i, d in enumerate(state.candidates_at(level))}
    candidates = tuple(
        VoteCandidate(digest, tuple(d)) for digest, d in
        sorted(depths.items(), key=lambda kv: order.get(kv[0], len(order)))
    )
    return VoteTally(
        level=level,
        candidates=candidates,
        fork_rate=state.voter_fork_rate(),
        beta=beta,
        epsilon=epsilon,
        m=state.m,
    )


def raw_leader(state: ChainState, level: int) -> bytes | None:
    """Most-voted candidate by current main-chain votes; ties break toward
    the smaller digest."""
    counts = state.votes_by_level.get(level)
    if not counts:
        return None
    return min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]


# --- ledger formation ---------------------------------------------------------


def build_ledger(
    leader_sequence: Iterable[bytes], state: ChainState
) -> list[tuple[Transaction, bytes]]:
    """Depth-first expansion of the leader sequence into an ordered tx list.

    For each leader in level order: recursively include not-yet-included
    referenced proposer blocks (parent first, then reference order), then
    its transaction blocks in reference order.  Every proposer and
    transaction block enters at most once.  Returns (transaction, id of
    its containing transaction block) pairs in ledger order.
    """
    included_prp: set[bytes] = set()
    included_tx: set[bytes] = set()
    ledger: list[tuple[Transaction, bytes]] = []

    def expand(digest: bytes) -> None:
        if digest == state.proposer_genesis or digest in included_prp:
            return
        entry = state.prp_entries.get(digest)
        if entry is None:
            raise MissingBlockError(f"proposer block {hex_digest(digest)} not stored")
        included_prp.add(digest)
        expand(entry.parent)
        for ref in entry.block.content.prp_refs:
            expand(ref)
        for ref in entry.block.content.tx_refs:
            if ref in included_tx:
                continue
            tx_block = state.tx_blocks.get(ref)
            if tx_block is None:
                raise MissingBlockError(f"transaction block {hex_digest(ref)} not stored")
            included_tx.add(ref)
            for tx in tx_block.content.txs:
                ledger.append((tx, ref))

    for leader in leader_sequence:
        expand(leader)
    return ledger


def confirmed_ledger(
    state: ChainState,
    beta: float,
    epsilon: float,
    scheme: SignatureScheme,
    initial_utxo: dict[CoinId, Utxo],
) -> tuple[list[bytes], list[Transaction], list[Transaction], dict[CoinId, Utxo]]:
    """Walk levels until the first unconfirmed leader, then build and
    sanitize the ledger of the confirmed prefix.

    Returns (leaders, raw ledger, sanitized ledger, final UTXO set).
    """
    leaders: list[bytes] = []
    for level in range(1, state.max_proposer_level() + 1):
        decision = try_confirm_leader(make_tally(state, level, beta, epsilon))
        if not decision.confirmed:
            break
        leaders.append(decision.leader)
    raw = [tx for tx, _ in build_ledger(leaders, state)]
    sanitized, final = sanitize(raw, dict(initial_utxo), scheme)
    return leaders, raw, sanitized, final


def is_tx_confirmed(
    tx: Transaction,
    state: ChainState,
    beta: float,
    epsilon: float,
    scheme: SignatureScheme,
    initial_utxo: dict[CoinId, Utxo],
    max_ledgers: int = 256,
) -> bool:
    """Fast list-decoding confirmation.

    True iff the transaction survives sanitization in every ledger built
    from the cross product of the per-level confirmed proposer sets.
    """
    level_sets: list[tuple[bytes, ...]] = []
    for level in range(1, state.max_proposer_level() + 1):
        decision = try_confirm_proposer_set(make_tally(state, level, beta, epsilon))
        if not decision.confirmed:
            break
        level_sets.append(decision.candidates)
    if not level_sets:
        return False
    count = math.prod(len(s) for s in level_sets)
    if count > max_ledgers:
        raise ListDecodingCapExceeded(f"{count} ledgers exceed the cap of {max_ledgers}")
    for combo in product(*level_sets):
        raw = [t for t, _ in build_ledger(combo, state)]
        applied, _ = sanitize(raw, dict(initial_utxo), scheme)
        if not any(t.digest == tx.digest for t in applied):
            return False
    return True


# --- incremental engine for simulation runs -----------------------------------


@dataclass
class LatencySample:
    tx_digest: bytes
    mined_at: float
    confirmed_at: float


class ConfirmationEngine:
    """Incrementally confirms levels of one observer's view over a run.

    Expanding leaders one at a time with shared included-sets produces
    exactly the ledger ``build_ledger`` would build from the whole
    prefix, so the confirmed ledger is prefix-stable by construction.
    The engine also watches already-confirmed levels for leader changes
    (reversals) and keeps a JSON-ready trace of every decision.
    """

    def __init__(
        self,
        state: ChainState,
        beta: float,
        epsilon: float,
        scheme: SignatureScheme,
        initial_utxo: dict[CoinId, Utxo],
        mine_time_of: Callable[[bytes], float] | None = None,
    ):
        self.state = state
        self.beta = beta
        self.epsilon = epsilon
        self.scheme = scheme
        self.utxo = dict(initial_utxo)
        self.mine_time_of = mine_time_of or (lambda digest: 0.0)

        self.leaders: list[bytes] = []
        self.confirm_times: list[float] = []
        self.included_prp: set[bytes] = set()
        self.included_tx: set[bytes] = set()
        self.raw_count = 0
        self.sanitized_count = 0
        self.fees: list[int] = []
        self.latency_samples: list[LatencySample] = []
        self.reversals: list[dict] = []
        self._reversed_levels: set[int] = set()
        self.trace: list[dict] = []

    def _expand_leader(self, leader: bytes, now: float) -> None:
        pending: list[tuple[Transaction, bytes]] = []

        def expand(digest: bytes) -> None:
            if digest == self.state.proposer_genesis or digest in self.included_prp:
                return
            entry = self.state.prp_entries.get(digest)
            if entry is None:
                raise MissingBlockError(hex_digest(digest))
            self.included_prp.add(digest)
            expand(entry.parent)
            for ref in entry.block.content.prp_refs:
                expand(ref)
            for ref in entry.block.content.tx_refs:
                if ref in self.included_tx:
                    continue
                tx_block = self.state.tx_blocks.get(ref)
                if tx_block is None:
                    raise MissingBlockError(hex_digest(ref))
                self.included_tx.add(ref)
                for tx in tx_block.content.txs:
                    pending.append((tx, ref))

        expand(leader)
        self.raw_count += len(pending)
        for tx, block_digest in pending:
            fee_in = sum(
                self.utxo[i].value for i in tx.input_ids() if i in self.utxo
            )
            if execute(tx, self.utxo, self.scheme) is APPLIED:
                self.sanitized_count += 1
                self.fees.append(fee_in - sum(o.value for o in tx.outputs))
                self.latency_samples.append(
                    LatencySample(tx.digest, self.mine_time_of(block_digest), now)
                )

    def evaluate(self, now: float) -> None:
        """One confirmation pass: extend the confirmed prefix as far as the
        rule allows, then audit confirmed levels for reversals."""
        while True:
            level = len(self.leaders) + 1
            if level > self.state.max_proposer_level():
                break
            tally = make_tally(self.state, level, self.beta, self.epsilon)
            decision = try_confirm_leader(tally)
            self.trace.append(self._trace_record(now, tally, decision))
            if not decision.confirmed:
                break
            self.leaders.append(decision.leader)
            self.confirm_times.append(now)
            self._expand_leader(decision.leader, now)
        for level0, confirmed_digest in enumerate(self.leaders):
            level = level0 + 1
            if level in self._reversed_levels:
                continue
            current = raw_leader(self.state, level)
            if current is not None and current != confirmed_digest:
                self._reversed_levels.add(level)
                self.reversals.append(
                    {
                        "time": now,
                        "level": level,
                        "confirmed": hex_digest(confirmed_digest),
                        "usurper": hex_digest(current),
                    }
                )

    def _trace_record(self, now: float, tally: VoteTally, decision: LeaderDecision) -> dict:
        return {
            "time": now,
            "level": tally.level,
            "alpha": tally.fork_rate,
            "mean_depth": tally.mean_depth,
            "adv_upper": decision.bounds.adversary_upper,
            "candidates": [
                {
                    "digest": hex_digest(c.digest),
                    "votes": c.votes,
                    "mu": c.mu,
                    "sigma": c.sigma,
                    "lower": c.lower,
                    "upper": c.upper,
                }
                for c in decision.bounds.candidates
            ],
            "verdict": "confirmed" if decision.confirmed else "unconfirmed",
            "leader": hex_digest(decision.leader) if decision.leader else None,
        }

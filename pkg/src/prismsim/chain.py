"""Per-node blockchain state machine.

Ingests validated blocks, maintains the proposer tree and the m voter
trees with their longest chains, keeps the miner-facing pools exact, and
buffers blocks whose ancestors have not arrived yet.  One instance per
simulated node; the simulator delivers events serially per node.
"""
from __future__ import annotations

from dataclasses import dataclass

from .blocks import (
    TRANSACTION,
    VOTER,
    Block,
    genesis_proposer_digest,
    genesis_voter_digest,
)
from .ledger import CoinId, Transaction
from .serialize import hex_digest

FIRST_SEEN = "first_seen"
MOST_VOTED = "most_voted"


@dataclass
class MempoolTx:
    tx: Transaction
    arrival: float
    release_time: float  # spam jitter: ineligible for mining before this


@dataclass
class VoterEntry:
    block: Block
    parent: bytes
    chainlen: int


@dataclass
class ProposerEntry:
    block: Block
    parent: bytes
    level: int


class VoterTree:
    """One voter blocktree with longest-chain tip and main-chain votes."""

    def __init__(self, index: int):
        self.index = index
        self.genesis = genesis_voter_digest(index)
        self.entries: dict[bytes, VoterEntry] = {}
        self.tip: bytes = self.genesis
        self.tip_chainlen: int = 0
        # level -> (proposer digest, chainlen of the voting block), first
        # vote per level walking genesis -> tip
        self.main_votes: dict[int, tuple[bytes, int]] = {}

    def has(self, digest: bytes) -> bool:
        return digest == self.genesis or digest in self.entries

    def chainlen(self, digest: bytes) -> int:
        return 0 if digest == self.genesis else self.entries[digest].chainlen

    def insert(self, block: Block) -> tuple[bool, list[tuple[int, bytes]], list[tuple[int, bytes]]]:
        """Insert a voter block whose parent is present.

        Returns (tip_changed, removed_votes, added_votes) where votes are
        (level, proposer digest) pairs entering/leaving the main chain.
        """
        parent = block.parent_ref
        entry = VoterEntry(block, parent, self.chainlen(parent) + 1)
        self.entries[block.digest] = entry
        if entry.chainlen <= self.tip_chainlen:
            return False, [], []  # shorter or tie: first arrival keeps the tip
        added: list[tuple[int, bytes]] = []
        removed: list[tuple[int, bytes]] = []
        if parent == self.tip:
            for level, digest in block.content.votes:
                if level not in self.main_votes:
                    self.main_votes[level] = (digest, entry.chainlen)
                    added.append((level, digest))
        else:
            old = dict(self.main_votes)
            self.main_votes = {}
            for chain_block in self.walk_from_genesis(block.digest):
                clen = self.entries[chain_block.digest].chainlen
                for level, digest in chain_block.content.votes:
                    if level not in self.main_votes:
                        self.main_votes[level] = (digest, clen)
            for level, (digest, _) in old.items():
                new = self.main_votes.get(level)
                if new is None or new[0] != digest:
                    removed.append((level, digest))
            for level, (digest, _) in self.main_votes.items():
                prev = old.get(level)
                if prev is None or prev[0] != digest:
                    added.append((level, digest))
        self.tip = block.digest
        self.tip_chainlen = entry.chainlen
        return True, removed, added

    def walk_from_genesis(self, tip: bytes) -> list[Block]:
        chain = []
        digest = tip
        while digest != self.genesis:
            entry = self.entries[digest]
            chain.append(entry.block)
            digest = entry.parent
        chain.reverse()
        return chain

    def vote_and_depth(self, level: int) -> tuple[bytes, int] | None:
        hit = self.main_votes.get(level)
        if hit is None:
            return None
        digest, chainlen = hit
        return digest, self.tip_chainlen - chainlen + 1


@dataclass(frozen=True)
class Accepted:
    pass


@dataclass(frozen=True)
class TxRejected:
    reason: str  # BadSignature | Conflict


TX_ACCEPTED = Accepted()


class ChainState:
    """One node's view of the whole Prism block structure."""

    def __init__(self, m: int, vote_rule: str = FIRST_SEEN):
        if vote_rule not in (FIRST_SEEN, MOST_VOTED):
            raise ValueError(f"unknown vote rule {vote_rule!r}")
        self.m = m
        self.vote_rule = vote_rule
        self.proposer_genesis = genesis_proposer_digest()
        self.voter_trees = [VoterTree(i) for i in range(m)]

        self.prp_entries: dict[bytes, ProposerEntry] = {}
        self.prp_by_level: dict[int, list[bytes]] = {}
        self.prp_parent: bytes = self.proposer_genesis
        self.prp_parent_level: int = 0

        self.tx_blocks: dict[bytes, Block] = {}
        self.unref_tx_pool: dict[bytes, None] = {}
        self.unref_prp_pool: dict[bytes, None] = {}

        self.mempool: dict[bytes, MempoolTx] = {}
        self.mempool_inputs: dict[CoinId, bytes] = {}
        self.mined_tx_digests: set[bytes] = set()
        self.mined_inputs: set[CoinId] = set()

        # levels each voter chain's main chain has not voted yet
        self.pending_vote_levels: list[set[int]] = [set() for _ in range(m)]
        # main-chain vote tallies across all trees: level -> digest -> count
        self.votes_by_level: dict[int, dict[bytes, int]] = {}

        self.orphans: dict[bytes, list[Block]] = {}
        self.orphan_digests: set[bytes] = set()

        # tx-block digests claimed by proposer blocks (including claims
        # that arrived before the tx block itself)
        self.referenced_tx_digests: set[bytes] = set()
        self.voter_blocks_stored = 0

    # --- transactions ---------------------------------------------------------

    def receive_transaction(
        self, tx: Transaction, now: float, scheme, release_time: float | None = None
    ) -> Accepted | TxRejected:
        """Admit to the mempool unless malformed or conflicting.

        ``release_time`` carries the spam-jitter delay; until then the
        transaction is ineligible for inclusion in mined blocks.
        """
        if not tx.signatures_well_formed(scheme):
            return TxRejected("BadSignature")
        if tx.digest in self.mempool or tx.digest in self.mined_tx_digests:
            return TxRejected("Conflict")
        for coin in tx.input_ids():
            if coin in self.mined_inputs or coin in self.mempool_inputs:
                return TxRejected("Conflict")
        self.mempool[tx.digest] = MempoolTx(tx, now, release_time if release_time is not None else now)
        for coin in tx.input_ids():
            self.mempool_inputs[coin] = tx.digest
        return TX_ACCEPTED

    def eligible_transactions(self, now: float, capacity: int) -> list[Transaction]:
        """FIFO snapshot of released mempool transactions, up to capacity."""
        out = []
        for entry in self.mempool.values():
            if entry.release_time <= now:
                out.append(entry.tx)
                if len(out) >= capacity:
                    break
        return out

    def _drop_mempool_tx(self, digest: bytes) -> None:
        entry = self.mempool.pop(digest, None)
        if entry is None:
            return
        for coin in entry.tx.input_ids():
            if self.mempool_inputs.get(coin) == digest:
                del self.mempool_inputs[coin]

    # --- blocks ---------------------------------------------------------------

    def has_block(self, digest: bytes) -> bool:
        if digest == self.proposer_genesis:
            return True
        if digest in self.prp_entries or digest in self.tx_blocks:
            return True
        return any(t.has(digest) for t in self.voter_trees)

    def get_block(self, digest: bytes) -> Block | None:
        if digest in self.prp_entries:
            return self.prp_entries[digest].block
        if digest in self.tx_blocks:
            return self.tx_blocks[digest]
        for tree in self.voter_trees:
            entry = tree.entries.get(digest)
            if entry is not None:
                return entry.block
        return None

    def receive_block(self, block: Block) -> list[str]:
        """Apply a validated block; returns the state changes it caused.

        Change tags: ``tx_block``, ``voter_stored:i``, ``voter_tip:i``,
        ``proposer_stored``, ``new_proposer_level:L``, ``prp_parent:L``,
        ``duplicate``, ``orphaned``, ``request_parent:<hex>``,
        ``rejected:bad_level``.
        """
        if self.has_block(block.digest) or block.digest in self.orphan_digests:
            return ["duplicate"]
        kind = block.block_type.kind
        if kind == TRANSACTION:
            return self._receive_tx_block(block)
        parent = block.parent_ref
        if kind == VOTER:
            tree = self.voter_trees[block.block_type.chain_index]
            if not tree.has(parent):
                return self._buffer_orphan(block, parent)
            changes = self._insert_voter(block)
        else:
            if parent != self.proposer_genesis and parent not in self.prp_entries:
                return self._buffer_orphan(block, parent)
            changes = self._insert_proposer(block)
        changes.extend(self._resolve_orphans(block.digest))
        return changes

    def _buffer_orphan(self, block: Block, missing: bytes) -> list[str]:
        self.orphans.setdefault(missing, []).append(block)
        self.orphan_digests.add(block.digest)
        return ["orphaned", f"request_parent:{hex_digest(missing)}"]

    def _resolve_orphans(self, digest: bytes) -> list[str]:
        changes: list[str] = []
        waiting = self.orphans.pop(digest, None)
        if not waiting:
            return changes
        for block in waiting:
            self.orphan_digests.discard(block.digest)
            if block.block_type.kind == VOTER:
                changes.extend(self._insert_voter(block))
            else:
                changes.extend(self._insert_proposer(block))
            changes.extend(self._resolve_orphans(block.digest))
        return changes

    def _receive_tx_block(self, block: Block) -> list[str]:
        self.tx_blocks[block.digest] = block
        # skip the pool if a proposer block already claimed it before arrival
        if block.digest not in self.referenced_tx_digests:
            self.unref_tx_pool[block.digest] = None
        spent: set[CoinId] = set()
        for tx in block.content.txs:
            self.mined_tx_digests.add(tx.digest)
            self._drop_mempool_tx(tx.digest)
            spent.update(tx.input_ids())
        self.mined_inputs.update(spent)
        # spam rule: conflicting mempool transactions are dropped too
        for coin in spent:
            holder = self.mempool_inputs.get(coin)
            if holder is not None:
                self._drop_mempool_tx(holder)
        return ["tx_block"]

    def _insert_voter(self, block: Block) -> list[str]:
        index = block.block_type.chain_index
        tree = self.voter_trees[index]
        tip_changed, removed, added = tree.insert(block)
        self.voter_blocks_stored += 1
        changes = [f"voter_stored:{index}"]
        if tip_changed:
            changes.append(f"voter_tip:{index}")
            for level, digest in removed:
                counts = self.votes_by_level.get(level)
                if counts is not None:
                    counts[digest] -= 1
                    if counts[digest] <= 0:
                        del counts[digest]
            for level, digest in added:
                self.votes_by_level.setdefault(level, {})
                self.votes_by_level[level][digest] = (
                    self.votes_by_level[level].get(digest, 0) + 1
                )
            if removed:
                # reorg: recompute the unvoted-level set for this chain
                self.pending_vote_levels[index] = {
                    lvl
                    for lvl in range(1, self.prp_parent_level + 1)
                    if lvl not in tree.main_votes
                }
            else:
                for level, _ in added:
                    self.pending_vote_levels[index].discard(level)
        return changes

    def _insert_proposer(self, block: Block) -> list[str]:
        parent = block.parent_ref
        parent_level = 0 if parent == self.proposer_genesis else self.prp_entries[parent].level
        if block.level != parent_level + 1:
            return ["rejected:bad_level"]
        entry = ProposerEntry(block, parent, block.level)
        self.prp_entries[block.digest] = entry
        changes = ["proposer_stored"]
        level_list = self.prp_by_level.setdefault(block.level, [])
        new_level = not level_list
        level_list.append(block.digest)
        self.unref_prp_pool[block.digest] = None
        # prune everything this block refers to: its parent plus both lists
        self.unref_prp_pool.pop(parent, None)
        for ref in block.content.prp_refs:
            self.unref_prp_pool.pop(ref, None)
        self.referenced_tx_digests.update(block.content.tx_refs)
        for ref in block.content.tx_refs:
            self.unref_tx_pool.pop(ref, None)
        if new_level:
            changes.append(f"new_proposer_level:{block.level}")
            for i in range(self.m):
                if block.level not in self.voter_trees[i].main_votes:
                    self.pending_vote_levels[i].add(block.level)
        if block.level > self.prp_parent_level:
            self.prp_parent = block.digest
            self.prp_parent_level = block.level
            changes.append(f"prp_parent:{block.level}")
        return changes

    # --- queries ---------------------------------------------------------------

    def longest_chain(self, tree_index: int) -> list[Block]:
        tree = self.voter_trees[tree_index]
        return tree.walk_from_genesis(tree.tip)

    def proposer_main_chain(self) -> list[Block]:
        chain = []
        digest = self.prp_parent
        while digest != self.proposer_genesis:
            entry = self.prp_entries[digest]
            chain.append(entry.block)
            digest = entry.parent
        chain.reverse()
        return chain

    def get_vote_and_depth(self, chain_index: int, level: int) -> tuple[bytes, int] | None:
        return self.voter_trees[chain_index].vote_and_depth(level)

    def candidates_at(self, level: int) -> list[bytes]:
        """Proposer candidates at a level: stored blocks first (arrival
        order), then any digests known only through votes."""
        stored = list(self.prp_by_level.get(level, []))
        seen = set(stored)
        for digest in self.votes_by_level.get(level, {}):
            if digest not in seen:
                stored.append(digest)
                seen.add(digest)
        return stored

    def first_seen_at(self, level: int) -> bytes | None:
        level_list = self.prp_by_level.get(level)
        return level_list[0] if level_list else None

    def vote_choice(self, level: int) -> bytes | None:
        """Which proposer block a fresh vote at this level should name."""
        level_list = self.prp_by_level.get(level)
        if not level_list:
            return None
        if self.vote_rule == FIRST_SEEN or len(level_list) == 1:
            return level_list[0]
        counts = self.votes_by_level.get(level, {})
        return max(level_list, key=lambda d: (counts.get(d, 0), -level_list.index(d)))

    def unvoted_levels(self, chain_index: int) -> list[int]:
        return sorted(self.pending_vote_levels[chain_index])

    def voter_fork_rate(self) -> float:
        total = self.voter_blocks_stored
        if total == 0:
            return 0.0
        on_main = sum(t.tip_chainlen for t in self.voter_trees)
        return 1.0 - on_main / total

    def proposer_fork_rate(self) -> float:
        total = len(self.prp_entries)
        if total == 0:
            return 0.0
        return 1.0 - self.prp_parent_level / total

    def max_proposer_level(self) -> int:
        return self.prp_parent_level

    # --- checkpoint dump --------------------------------------------------------

    def checkpoint(self) -> dict:
        """Structured dump of trees, tips and pools for offline auditing."""
        return {
            "proposer": {
                "parent": hex_digest(self.prp_parent),
                "parent_level": self.prp_parent_level,
                "edges": {
                    hex_digest(d): hex_digest(e.parent) for d, e in self.prp_entries.items()
                },
                "by_level": {
                    str(level): [hex_digest(d) for d in digests]
                    for level, digests in self.prp_by_level.items()
                },
            },
            "voter_tips": [
                {"tip": hex_digest(t.tip), "chainlen": t.tip_chainlen}
                for t in self.voter_trees
            ],
            "pools": {
                "unref_tx": [hex_digest(d) for d in self.unref_tx_pool],
                "unref_prp": [hex_digest(d) for d in self.unref_prp_pool],
                "mempool_size": len(self.mempool),
            },
            "forking": {
                "voter": self.voter_fork_rate(),
                "proposer": self.proposer_fork_rate(),
            },
        }

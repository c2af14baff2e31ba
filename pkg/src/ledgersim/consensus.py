"""Round-based BFT consensus state machine with instant per-height finality.

One Engine instance drives one validator at one height. The protocol is
the familiar three-phase exchange: the scheduled proposer broadcasts a
proposal (PRE_PREPARE), validators vote PREPARE, a prepare quorum locks
the node onto the proposal hash and releases its COMMIT, and a commit
quorum finalizes the block with the commit signatures embedded as seals.
Silent proposers are handled by ROUND_CHANGE votes with exponentially
growing timeouts; a quorum of round-change votes moves everyone to the
new round, whose proposer re-proposes its locked block if it has one.

Simplifications relative to full IBFT 2.0, on purpose:
  - no prepared-certificate piggybacking on round changes; instead a
    node never unlocks, re-proposes its locked block on its own turn,
    and lagging nodes are rescued out-of-band by sealed-block announces
    (see node.py);
  - commit quorums are accepted as finality proof for any round of the
    current height, so a node that missed the prepare phase can still
    finalize once it holds the proposal and a quorum of commits.

The engine is a pure state machine: callers feed it messages, timer
expiries and height starts, and it returns outbound messages plus an
optional finalized block. Messages the engine broadcasts are applied to
its own state synchronously (a validator counts its own votes), which
makes the degenerate single-validator network finalize in one step.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .crypto import KeyPair, Registry, sign
from .errors import UnknownPublicId
from .keccak import keccak256
from .model import (
    Address, Block, Hash256, Signature, ZERO_HASH, _u, block_hash,
)


def fault_tolerance(n: int) -> int:
    """Maximum Byzantine validators tolerated among n."""
    if n < 1:
        raise ValueError("validator count must be >= 1")
    return (n - 1) // 3


def quorum_size(n: int) -> int:
    """Smallest vote count strictly greater than two thirds of n."""
    if n < 1:
        raise ValueError("validator count must be >= 1")
    return (2 * n) // 3 + 1


@dataclass(frozen=True)
class ConsensusConfig:
    validators: tuple[Address, ...]
    base_round_timeout: int

    def __post_init__(self) -> None:
        if len(self.validators) < 1:
            raise ValueError("need at least one validator")
        if len(set(self.validators)) != len(self.validators):
            raise ValueError("validators must be distinct")
        if self.base_round_timeout < 1:
            raise ValueError("base_round_timeout must be >= 1")

    @property
    def n(self) -> int:
        return len(self.validators)

    @property
    def f(self) -> int:
        return fault_tolerance(self.n)

    @property
    def quorum(self) -> int:
        return quorum_size(self.n)


def proposer_for(height: int, round_: int, config: ConsensusConfig) -> Address:
    return config.validators[(height + round_) % config.n]


class MsgKind(enum.Enum):
    PRE_PREPARE = "PRE_PREPARE"
    PREPARE = "PREPARE"
    COMMIT = "COMMIT"
    ROUND_CHANGE = "ROUND_CHANGE"


_KIND_TAG = {k: i for i, k in enumerate(MsgKind)}


@dataclass(frozen=True, slots=True)
class ConsensusMessage:
    kind: MsgKind
    height: int
    round: int
    block_hash: Hash256
    sender: Address
    signature: Signature
    proposal: Optional[Block] = None


def message_digest(kind: MsgKind, height: int, round_: int,
                   block_hash_: Hash256) -> Hash256:
    payload = _u(_KIND_TAG[kind], 1) + _u(height, 8) + _u(round_, 8) + block_hash_
    return Hash256(keccak256(payload))


def make_message(key: KeyPair, kind: MsgKind, height: int, round_: int,
                 block_hash_: Hash256,
                 proposal: Optional[Block] = None) -> ConsensusMessage:
    digest = message_digest(kind, height, round_, block_hash_)
    return ConsensusMessage(kind, height, round_, block_hash_,
                            key.address, sign(key, digest), proposal)


def verify_message(msg: ConsensusMessage, registry: Registry) -> bool:
    digest = message_digest(msg.kind, msg.height, msg.round, msg.block_hash)
    try:
        return registry.verify_by_address(msg.sender, digest, msg.signature)
    except UnknownPublicId:
        return False


class Phase(enum.Enum):
    AWAITING_PROPOSAL = "AWAITING_PROPOSAL"
    PREPARED = "PREPARED"
    COMMITTED = "COMMITTED"
    FINALIZED = "FINALIZED"


@dataclass
class StepResult:
    outbound: list[ConsensusMessage] = field(default_factory=list)
    finalized: Optional[Block] = None
    timer: Optional[tuple[int, int]] = None  # (deadline, epoch)
    phase_before: Phase = Phase.AWAITING_PROPOSAL
    phase_after: Phase = Phase.AWAITING_PROPOSAL
    discards: list[str] = field(default_factory=list)


class Engine:
    """Consensus state machine for a single validator.

    `build_block` supplies a fresh candidate when this validator is the
    scheduled proposer; `validate_block` performs full content checks
    (parent linkage, gas, transaction signatures, state root) and is the
    hook through which honest nodes refuse to PREPARE bad proposals.
    """

    def __init__(self, config: ConsensusConfig, key: KeyPair, registry: Registry,
                 build_block: Callable[[int, int], Block],
                 validate_block: Callable[[Block], bool]) -> None:
        self.config = config
        self.key = key
        self.registry = registry
        self.build_block = build_block
        self.validate_block = validate_block

        self.height = 0
        self.round = 0
        self.phase = Phase.FINALIZED  # idle until start_height
        self.locked_hash: Optional[Hash256] = None
        self.locked_block: Optional[Block] = None
        self.accepted: Optional[Block] = None
        self.timer_epoch = 0
        self.rc_target = 0

        self._known_blocks: dict[Hash256, Block] = {}
        self._prepares: dict[tuple[int, Hash256], set[Address]] = {}
        self._commits: dict[tuple[int, Hash256], dict[Address, Signature]] = {}
        self._round_changes: dict[int, set[Address]] = {}
        self._lock_hints: dict[Address, Hash256] = {}
        self._future_proposals: dict[int, ConsensusMessage] = {}
        self._result: StepResult | None = None

    # -- public entry points -------------------------------------------------

    def start_height(self, height: int, now: int) -> StepResult:
        result = self._begin()
        self.height = height
        self.phase = Phase.AWAITING_PROPOSAL
        self.locked_hash = None
        self.locked_block = None
        self.accepted = None
        self.rc_target = -1
        self._known_blocks.clear()
        self._prepares.clear()
        self._commits.clear()
        self._round_changes.clear()
        self._lock_hints.clear()
        self._future_proposals.clear()
        self._enter_round(0, now)
        return self._finish(result)

    def handle_message(self, msg: ConsensusMessage, now: int) -> StepResult:
        result = self._begin()
        if msg.sender not in self.config.validators:
            result.discards.append("NotValidator")
        elif not verify_message(msg, self.registry):
            result.discards.append("InvalidSignature")
        elif msg.height != self.height:
            result.discards.append("WrongHeight")
        elif self.phase is Phase.FINALIZED:
            result.discards.append("HeightClosed")
        else:
            self._process(msg, now)
        return self._finish(result)

    def handle_timer(self, epoch: int, now: int) -> StepResult:
        result = self._begin()
        if epoch != self.timer_epoch or self.phase is Phase.FINALIZED:
            result.discards.append("StaleTimer")
            return self._finish(result)
        target = max(self.round, self.rc_target) + 1
        self.rc_target = target
        self.timer_epoch += 1
        result.timer = (now + self._timeout(target), self.timer_epoch)
        self._broadcast(make_message(
            self.key, MsgKind.ROUND_CHANGE, self.height, target,
            self.locked_hash or ZERO_HASH), now)
        return self._finish(result)

    # -- internals -------------------------------------------------------------

    def _begin(self) -> StepResult:
        result = StepResult(phase_before=self.phase, phase_after=self.phase)
        self._result = result
        return result

    def _finish(self, result: StepResult) -> StepResult:
        result.phase_after = self.phase
        self._result = None
        return result

    def _timeout(self, round_: int) -> int:
        return self.config.base_round_timeout * (2 ** round_)

    def _broadcast(self, msg: ConsensusMessage, now: int) -> None:
        assert self._result is not None
        self._result.outbound.append(msg)
        # a validator counts its own vote immediately
        self._process(msg, now)

    def _enter_round(self, round_: int, now: int) -> None:
        assert self._result is not None
        self.round = round_
        self.phase = Phase.AWAITING_PROPOSAL
        self.accepted = None
        self.rc_target = max(self.rc_target, round_)
        self.timer_epoch += 1
        self._result.timer = (now + self._timeout(round_), self.timer_epoch)
        if proposer_for(self.height, round_, self.config) == self.key.address:
            block = self.locked_block
            if block is None:
                block = self._contested_block()
            if block is None:
                block = self.build_block(self.height, round_)
            self._broadcast(make_message(
                self.key, MsgKind.PRE_PREPARE, self.height, round_,
                block_hash(block), proposal=block), now)
        queued = self._future_proposals.pop(round_, None)
        if queued is not None and self.round == round_:
            self._process(queued, now)
        if self.round == round_ and self.phase is not Phase.FINALIZED:
            self._check_quorums(now)

    def _process(self, msg: ConsensusMessage, now: int) -> None:
        if self.phase is Phase.FINALIZED:
            return
        kind = msg.kind
        if kind is MsgKind.PRE_PREPARE:
            self._on_pre_prepare(msg, now)
        elif kind is MsgKind.PREPARE:
            self._on_prepare(msg, now)
        elif kind is MsgKind.COMMIT:
            self._on_commit(msg, now)
        else:
            self._on_round_change(msg, now)

    def _discard(self, reason: str) -> None:
        assert self._result is not None
        self._result.discards.append(reason)

    def _on_pre_prepare(self, msg: ConsensusMessage, now: int) -> None:
        if msg.round < self.round:
            return self._discard("StaleRound")
        if msg.proposal is None or block_hash(msg.proposal) != msg.block_hash:
            return self._discard("MalformedProposal")
        if msg.sender != proposer_for(self.height, msg.round, self.config):
            return self._discard("InvalidProposer")
        if msg.round > self.round:
            self._future_proposals.setdefault(msg.round, msg)
            return
        if self.accepted is not None:
            return self._discard("DuplicateMessage")
        if self.locked_hash is not None and msg.block_hash != self.locked_hash:
            return self._discard("ConflictsWithLock")
        if not self.validate_block(msg.proposal):
            return self._discard("InvalidBlock")
        self.accepted = msg.proposal
        self._known_blocks[msg.block_hash] = msg.proposal
        self._broadcast(make_message(
            self.key, MsgKind.PREPARE, self.height, self.round,
            msg.block_hash), now)
        if self.phase is not Phase.FINALIZED:
            self._check_quorums(now)

    def _on_prepare(self, msg: ConsensusMessage, now: int) -> None:
        if msg.round < self.round:
            return self._discard("StaleRound")
        bucket = self._prepares.setdefault((msg.round, msg.block_hash), set())
        if msg.sender in bucket:
            return self._discard("DuplicateMessage")
        bucket.add(msg.sender)
        if msg.round == self.round:
            self._check_quorums(now)

    def _on_commit(self, msg: ConsensusMessage, now: int) -> None:
        if msg.round < self.round:
            return self._discard("StaleRound")
        # future-round commits are kept: a commit quorum is finality
        # evidence for this height no matter which round produced it
        bucket = self._commits.setdefault((msg.round, msg.block_hash), {})
        if msg.sender in bucket:
            return self._discard("DuplicateMessage")
        bucket[msg.sender] = msg.signature
        self._check_quorums(now)

    def _on_round_change(self, msg: ConsensusMessage, now: int) -> None:
        target = msg.round
        if target <= self.round:
            return self._discard("StaleRound")
        if msg.block_hash != ZERO_HASH:
            # the sender is locked; remember what it is locked on so a
            # later proposer can re-propose the contested block instead
            # of a fresh one the locked nodes would have to reject
            self._lock_hints[msg.sender] = msg.block_hash
        bucket = self._round_changes.setdefault(target, set())
        if msg.sender in bucket:
            return self._discard("DuplicateMessage")
        bucket.add(msg.sender)

        # quorum of round changes moves us to the smallest such round
        while self.phase is not Phase.FINALIZED:
            ready = [t for t, s in sorted(self._round_changes.items())
                     if t > self.round and len(s) >= self.config.quorum]
            if not ready:
                break
            self._enter_round(ready[0], now)

        if self.phase is Phase.FINALIZED:
            return
        # f+1 distinct peers already asked for a later round: echo the
        # smallest one so a live minority cannot be left behind
        later = [t for t in self._round_changes if t > self.round]
        if later:
            union: set[Address] = set()
            for t in later:
                union |= self._round_changes[t]
            jump = min(later)
            if len(union) >= self.config.f + 1 and self.rc_target < jump:
                self.rc_target = jump
                self._broadcast(make_message(
                    self.key, MsgKind.ROUND_CHANGE, self.height, jump,
                    self.locked_hash or ZERO_HASH), now)

    def _contested_block(self) -> Optional[Block]:
        """The block some peer reports being locked on, if we hold it.

        Only a liveness aid: whatever is proposed still needs a fresh
        prepare quorum, so a bogus hint cannot hurt safety. Ties break
        on (most reporters, lowest hash) for determinism.
        """
        counts: dict[Hash256, int] = {}
        for hinted in self._lock_hints.values():
            if hinted in self._known_blocks:
                counts[hinted] = counts.get(hinted, 0) + 1
        if not counts:
            return None
        best = min(counts, key=lambda h: (-counts[h], h))
        return self._known_blocks[best]

    def _check_quorums(self, now: int) -> None:
        q = self.config.quorum
        if (self.phase is Phase.AWAITING_PROPOSAL and self.accepted is not None):
            bh = block_hash(self.accepted)
            if len(self._prepares.get((self.round, bh), ())) >= q:
                self.phase = Phase.PREPARED
                self.locked_hash = bh
                self.locked_block = self.accepted
                self._broadcast(make_message(
                    self.key, MsgKind.COMMIT, self.height, self.round, bh), now)
                if self.phase is Phase.FINALIZED:
                    return
        for (round_, bh), seals in self._commits.items():
            if len(seals) >= q and bh in self._known_blocks:
                self._finalize(round_, bh, seals)
                return

    def _finalize(self, round_: int, bh: Hash256,
                  seals: dict[Address, Signature]) -> None:
        assert self._result is not None
        block = self._known_blocks[bh]
        self.phase = Phase.COMMITTED
        sealed = replace(
            block, round=round_,
            commit_seals=tuple(sorted(seals.items())))
        self.phase = Phase.FINALIZED
        self._result.finalized = sealed


def validate_finalized_block(block: Block, config: ConsensusConfig,
                             registry: Registry,
                             parent: Optional[Block]) -> bool:
    """Quorum-seal and linkage check for a block claimed final.

    Genesis (height 0) needs correct constants and no seals; any other
    block needs a quorum of distinct validator seals, each a valid
    commit signature over this block's height, round and hash.
    """
    if parent is not None:
        if block.height != parent.height + 1:
            return False
        if block.parent_hash != block_hash(parent):
            return False
    if block.height == 0:
        return block.parent_hash == ZERO_HASH and not block.commit_seals
    if len(block.commit_seals) < config.quorum:
        return False
    signers = [addr for addr, _ in block.commit_seals]
    if len(set(signers)) != len(signers):
        return False
    if any(addr not in config.validators for addr in signers):
        return False
    digest = message_digest(MsgKind.COMMIT, block.height, block.round,
                            block_hash(block))
    for addr, seal in block.commit_seals:
        try:
            if not registry.verify_by_address(addr, digest, seal):
                return False
        except UnknownPublicId:
            return False
    return True

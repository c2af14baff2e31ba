"""Consensus state machine: quorum math, voting rounds, locking, seals."""

from collections import deque

import pytest

from ledgersim import contract
from ledgersim.consensus import (
    ConsensusConfig, Engine, MsgKind, Phase, StepResult, fault_tolerance,
    make_message, message_digest, proposer_for, quorum_size,
    validate_finalized_block, verify_message,
)
from ledgersim.model import Address, Block, Hash256, ZERO_HASH, block_hash
from ledgersim.simulation import make_genesis_block

GENESIS = make_genesis_block()


class TestQuorumMath:
    def test_paper_configuration(self):
        assert fault_tolerance(4) == 1
        assert quorum_size(4) == 3

    def test_degenerate_single_validator(self):
        assert fault_tolerance(1) == 0
        assert quorum_size(1) == 1

    def test_seven_validators(self):
        assert fault_tolerance(7) == 2

    def test_quorum_matches_bruteforce_enumeration(self):
        for n in range(1, 101):
            smallest = next(q for q in range(1, n + 1) if 3 * q > 2 * n)
            assert quorum_size(n) == smallest

    def test_consensus_inequality_holds_when_n_at_least_3f_plus_1(self):
        for n in range(1, 101):
            f = fault_tolerance(n)
            if n >= 3 * f + 1:
                assert n - f > 2 * f

    def test_rejects_zero_validators(self):
        with pytest.raises(ValueError):
            quorum_size(0)
        with pytest.raises(ValueError):
            fault_tolerance(0)


class TestProposerRotation:
    def _config(self, keys, n):
        return ConsensusConfig(tuple(k.address for k in keys[:n]), 30)

    def test_first_slot(self, keys):
        config = self._config(keys, 4)
        assert proposer_for(0, 0, config) == keys[0].address

    def test_height_plus_round_mod_n(self, keys):
        config = self._config(keys, 4)
        assert proposer_for(5, 2, config) == keys[3].address

    def test_pure_function(self, keys):
        config = self._config(keys, 4)
        for h in range(10):
            for r in range(5):
                assert proposer_for(h, r, config) == proposer_for(h, r, config)


class TestMessageSignatures:
    def test_round_trip(self, keys, registry):
        msg = make_message(keys[0], MsgKind.PREPARE, 3, 1, Hash256(b"\x01" * 32))
        assert verify_message(msg, registry)

    def test_tampered_round_fails(self, keys, registry):
        msg = make_message(keys[0], MsgKind.PREPARE, 3, 1, Hash256(b"\x01" * 32))
        from dataclasses import replace
        assert not verify_message(replace(msg, round=2), registry)

    def test_digest_covers_kind(self):
        h = Hash256(b"\x01" * 32)
        assert message_digest(MsgKind.PREPARE, 1, 0, h) != \
            message_digest(MsgKind.COMMIT, 1, 0, h)


def _make_engine(key, config, registry):
    def build_block(height, round_):
        root = contract.state_root(contract.fresh_state())
        return Block(height, round_, block_hash(GENESIS), key.address, (),
                     root, ())
    return Engine(config, key, registry, build_block, lambda b: True)


class Pump:
    """Synchronous message pump between engines; no delays, no loss."""

    def __init__(self, keys, registry, n):
        self.config = ConsensusConfig(tuple(k.address for k in keys[:n]), 30)
        self.engines = {k.address: _make_engine(k, self.config, registry)
                        for k in keys[:n]}
        self.queue: deque = deque()
        self.timers: dict[Address, tuple[int, int]] = {}
        self.finalized: dict[Address, Block] = {}
        self.muted: set[Address] = set()

    def start_all(self, height=1, now=0):
        for addr, engine in self.engines.items():
            self._absorb(addr, engine.start_height(height, now))
        self.deliver_all(now)

    def _absorb(self, sender, step: StepResult):
        if step.timer is not None:
            self.timers[sender] = step.timer
        if step.finalized is not None:
            self.finalized.setdefault(sender, step.finalized)
        if sender in self.muted:
            return
        for msg in step.outbound:
            self.queue.append((sender, msg))

    def deliver_all(self, now=0, limit=10_000):
        while self.queue and limit:
            limit -= 1
            sender, msg = self.queue.popleft()
            for addr, engine in self.engines.items():
                if addr == sender:
                    continue
                self._absorb(addr, engine.handle_message(msg, now))
        assert limit, "message storm"

    def fire_timer(self, addr, now):
        deadline, epoch = self.timers[addr]
        self._absorb(addr, self.engines[addr].handle_timer(epoch, now))


class TestSingleValidator:
    def test_start_height_finalizes_immediately(self, keys, registry):
        pump = Pump(keys, registry, 1)
        addr = keys[0].address
        step = pump.engines[addr].start_height(1, 0)
        assert step.finalized is not None
        assert step.finalized.height == 1
        assert len(step.finalized.commit_seals) == 1
        assert pump.engines[addr].phase is Phase.FINALIZED


class TestHonestRun:
    def test_four_validators_finalize_with_three_seals(self, keys, registry):
        pump = Pump(keys, registry, 4)
        pump.start_all(height=1)
        assert set(pump.finalized) == set(pump.config.validators)
        hashes = {block_hash(b) for b in pump.finalized.values()}
        assert len(hashes) == 1
        for block in pump.finalized.values():
            assert len(block.commit_seals) >= 3
            assert validate_finalized_block(block, pump.config, registry,
                                            parent=GENESIS)

    def test_proposer_for_height_1_round_0_proposes(self, keys, registry):
        pump = Pump(keys, registry, 4)
        proposer = proposer_for(1, 0, pump.config)
        step = pump.engines[proposer].start_height(1, 0)
        kinds = [m.kind for m in step.outbound]
        assert MsgKind.PRE_PREPARE in kinds and MsgKind.PREPARE in kinds


class TestSilentProposer:
    def test_round_change_recovers_in_round_one(self, keys, registry):
        pump = Pump(keys, registry, 4)
        silent = proposer_for(1, 0, pump.config)
        pump.muted.add(silent)
        pump.start_all(height=1)
        assert not pump.finalized  # nothing can finalize without a proposal

        # every live validator times out and broadcasts ROUND_CHANGE(1)
        for addr in pump.config.validators:
            if addr != silent:
                pump.fire_timer(addr, now=30)
        pump.deliver_all(now=30)

        live = [a for a in pump.config.validators if a != silent]
        assert all(pump.engines[a].round == 1 for a in live)
        assert all(a in pump.finalized for a in live)
        for addr in live:
            assert pump.finalized[addr].round == 1

    def test_finalized_block_passes_validation(self, keys, registry):
        pump = Pump(keys, registry, 4)
        silent = proposer_for(1, 0, pump.config)
        pump.muted.add(silent)
        pump.start_all(height=1)
        for addr in pump.config.validators:
            if addr != silent:
                pump.fire_timer(addr, now=30)
        pump.deliver_all(now=30)
        block = next(iter(pump.finalized.values()))
        assert validate_finalized_block(block, pump.config, registry,
                                        parent=GENESIS)


class TestDiscards:
    def test_wrong_proposer_pre_prepare_discarded(self, keys, registry):
        pump = Pump(keys, registry, 4)
        victim = proposer_for(1, 0, pump.config)
        intruder = next(k for k in keys[:4] if k.address != victim)
        engine = pump.engines[victim]
        engine.start_height(1, 0)
        root = contract.state_root(contract.fresh_state())
        block = Block(1, 0, block_hash(GENESIS), intruder.address, (), root, ())
        msg = make_message(intruder, MsgKind.PRE_PREPARE, 1, 0,
                           block_hash(block), proposal=block)
        step = engine.handle_message(msg, 0)
        assert "InvalidProposer" in step.discards
        assert engine.accepted is None or engine.accepted.proposer == victim

    def test_duplicate_prepare_discarded(self, keys, registry):
        pump = Pump(keys, registry, 4)
        target = pump.config.validators[0]
        engine = pump.engines[target]
        engine.start_height(1, 0)
        voter = keys[2]
        msg = make_message(voter, MsgKind.PREPARE, 1, 0, Hash256(b"\x09" * 32))
        first = engine.handle_message(msg, 0)
        assert "DuplicateMessage" not in first.discards
        second = engine.handle_message(msg, 0)
        assert "DuplicateMessage" in second.discards

    def test_stale_round_message_discarded(self, keys, registry):
        pump = Pump(keys, registry, 4)
        silent = proposer_for(1, 0, pump.config)
        pump.muted.add(silent)
        pump.start_all(height=1)
        for addr in pump.config.validators:
            if addr != silent:
                pump.fire_timer(addr, now=30)
        pump.deliver_all(now=30)
        live = next(a for a in pump.config.validators if a != silent)
        engine = pump.engines[live]
        # a fresh height keeps the example self-contained
        engine.start_height(2, 40)
        engine._round_changes.setdefault(1, set())
        engine.round = 1  # pretend round already advanced
        voter = next(k for k in keys[:4] if k.address != live)
        stale = make_message(voter, MsgKind.PREPARE, 2, 0, Hash256(b"\x01" * 32))
        step = engine.handle_message(stale, 41)
        assert "StaleRound" in step.discards

    def test_unknown_sender_rejected(self, keys, registry):
        pump = Pump(keys, registry, 4)
        outsider = keys[6]  # registered key, but not a validator
        engine = pump.engines[pump.config.validators[0]]
        engine.start_height(1, 0)
        msg = make_message(outsider, MsgKind.PREPARE, 1, 0, ZERO_HASH)
        step = engine.handle_message(msg, 0)
        assert "NotValidator" in step.discards


class TestLocking:
    def test_prepared_node_only_commits_locked_hash(self, keys, registry):
        pump = Pump(keys, registry, 4)
        pump.start_all(height=1)
        for engine in pump.engines.values():
            sent_commits = set()
            # inspect the seals recorded for this height
            for (r, bh), seals in engine._commits.items():
                if engine.key.address in seals:
                    sent_commits.add(bh)
            assert len(sent_commits) <= 1
            if sent_commits and engine.locked_hash is not None:
                assert sent_commits == {engine.locked_hash}


class TestValidateFinalizedBlock:
    def _finalized_block(self, keys, registry):
        pump = Pump(keys, registry, 4)
        pump.start_all(height=1)
        return next(iter(pump.finalized.values())), pump.config

    def test_three_valid_seals_pass(self, keys, registry):
        block, config = self._finalized_block(keys, registry)
        assert validate_finalized_block(block, config, registry, parent=GENESIS)

    def test_two_seals_fail(self, keys, registry):
        block, config = self._finalized_block(keys, registry)
        from dataclasses import replace
        trimmed = replace(block, commit_seals=block.commit_seals[:2])
        assert not validate_finalized_block(trimmed, config, registry,
                                            parent=GENESIS)

    def test_duplicated_signer_fails(self, keys, registry):
        block, config = self._finalized_block(keys, registry)
        from dataclasses import replace
        seals = block.commit_seals
        forged = replace(block, commit_seals=(seals[0], seals[0], seals[1]))
        assert not validate_finalized_block(forged, config, registry,
                                            parent=GENESIS)

    def test_wrong_parent_fails(self, keys, registry):
        block, config = self._finalized_block(keys, registry)
        other_parent = Block(0, 0, ZERO_HASH, Address(bytes(20)), (),
                             Hash256(b"\x55" * 32), ())
        assert not validate_finalized_block(block, config, registry,
                                            parent=other_parent)

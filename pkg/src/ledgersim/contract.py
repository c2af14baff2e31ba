"""Deterministic state machine for the financial-distribution contract.

Five mutating operations guarded by the organization role, plus a local
balance read. Guard failures produce FAILED receipts with the first
failing guard's error code and leave state untouched; the algorithms'
silent skips become observable this way without changing state
semantics. Guards are evaluated in textual order: authorization, then
recipient membership, then funds or account-string checks.

The transition function is pure: apply_transaction returns a new
LedgerState and never mutates its input.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from .errors import NotDeployed
from .keccak import keccak256
from .model import (
    Address, AddFunds, AddRecipient, Amount, Block, Deploy, ErrorCode, Event,
    AllowanceSent, BankAccountRegistered, FundsAdded, Hash256, Receipt,
    RegisterBankAccount, RemoveRecipient, SendAllowance, Transaction,
    TxPayload, TxStatus, ZERO_ADDRESS, _u, hx, tx_hash,
)

GAS_DEPLOY = 200_000
GAS_OP = 21_000


def gas_for(payload: TxPayload) -> int:
    return GAS_DEPLOY if isinstance(payload, Deploy) else GAS_OP


@dataclass(frozen=True)
class ContractState:
    organization: Address
    recipients: dict[Address, bool]
    bank_accounts: dict[Address, Hash256]
    balances: dict[Address, Amount]
    deployed: bool


def fresh_state() -> ContractState:
    return ContractState(ZERO_ADDRESS, {}, {}, {}, False)


@dataclass(frozen=True, slots=True)
class OpResult:
    error: Optional[ErrorCode]
    events: tuple[Event, ...] = ()

    @property
    def ok(self) -> bool:
        return self.error is None


_OK = OpResult(None)


def deploy(state: ContractState, sender: Address) -> tuple[ContractState, OpResult]:
    if state.deployed:
        return state, OpResult(ErrorCode.ALREADY_DEPLOYED)
    return ContractState(sender, {}, {}, {}, True), _OK


def add_recipient(state: ContractState, sender: Address,
                  recipient: Address) -> tuple[ContractState, OpResult]:
    if not state.deployed:
        return state, OpResult(ErrorCode.NOT_DEPLOYED)
    if sender != state.organization:
        return state, OpResult(ErrorCode.UNAUTHORIZED)
    recipients = dict(state.recipients)
    recipients[recipient] = True
    return replace(state, recipients=recipients), _OK


def remove_recipient(state: ContractState, sender: Address,
                     recipient: Address) -> tuple[ContractState, OpResult]:
    if not state.deployed:
        return state, OpResult(ErrorCode.NOT_DEPLOYED)
    if sender != state.organization:
        return state, OpResult(ErrorCode.UNAUTHORIZED)
    recipients = dict(state.recipients)
    recipients[recipient] = False
    return replace(state, recipients=recipients), _OK


def register_bank_account(state: ContractState, sender: Address, recipient: Address,
                          account: str) -> tuple[ContractState, OpResult]:
    if not state.deployed:
        return state, OpResult(ErrorCode.NOT_DEPLOYED)
    if sender != state.organization:
        return state, OpResult(ErrorCode.UNAUTHORIZED)
    if not state.recipients.get(recipient, False):
        return state, OpResult(ErrorCode.UNKNOWN_RECIPIENT)
    raw = account.encode("utf-8")
    if len(raw) == 0:
        return state, OpResult(ErrorCode.EMPTY_ACCOUNT_STRING)
    account_hash = Hash256(keccak256(raw))
    bank_accounts = dict(state.bank_accounts)
    bank_accounts[recipient] = account_hash
    event = BankAccountRegistered(recipient, account_hash)
    return replace(state, bank_accounts=bank_accounts), OpResult(None, (event,))


def add_funds(state: ContractState, sender: Address,
              amt: Amount) -> tuple[ContractState, OpResult]:
    if not state.deployed:
        return state, OpResult(ErrorCode.NOT_DEPLOYED)
    if sender != state.organization:
        return state, OpResult(ErrorCode.UNAUTHORIZED)
    balances = dict(state.balances)
    try:
        balances[state.organization] = balances.get(state.organization, Amount(0)) + amt
    except OverflowError:
        return state, OpResult(ErrorCode.OVERFLOW)
    # the event reports the amount actually credited
    return replace(state, balances=balances), OpResult(None, (FundsAdded(amt),))


def send_allowance(state: ContractState, sender: Address, recipient: Address,
                   amount: Amount) -> tuple[ContractState, OpResult]:
    if not state.deployed:
        return state, OpResult(ErrorCode.NOT_DEPLOYED)
    if sender != state.organization:
        return state, OpResult(ErrorCode.UNAUTHORIZED)
    if not state.recipients.get(recipient, False):
        return state, OpResult(ErrorCode.UNKNOWN_RECIPIENT)
    balance = state.balances.get(state.organization, Amount(0))
    if not balance >= amount:
        return state, OpResult(ErrorCode.INSUFFICIENT_FUNDS)
    balances = dict(state.balances)
    balances[state.organization] = balance - amount
    # the payout itself is off-ledger: the recipient is notified by the
    # event and is never credited on-chain
    event = AllowanceSent(recipient, amount)
    return replace(state, balances=balances), OpResult(None, (event,))


def get_balance(state: ContractState, caller: Address) -> Amount:
    """Node-local read; never a consensus transaction."""
    if not state.deployed:
        raise NotDeployed("contract not deployed")
    return state.balances.get(caller, Amount(0))


# --- transaction dispatch ---------------------------------------------------

@dataclass(frozen=True)
class LedgerState:
    """Contract state plus per-sender nonce bookkeeping."""
    contract: ContractState
    nonces: dict[Address, int]


def genesis_ledger() -> LedgerState:
    return LedgerState(fresh_state(), {})


def _dispatch(state: ContractState, tx: Transaction) -> tuple[ContractState, OpResult]:
    p = tx.payload
    if isinstance(p, Deploy):
        return deploy(state, tx.sender)
    if isinstance(p, AddRecipient):
        return add_recipient(state, tx.sender, p.recipient)
    if isinstance(p, RemoveRecipient):
        return remove_recipient(state, tx.sender, p.recipient)
    if isinstance(p, RegisterBankAccount):
        return register_bank_account(state, tx.sender, p.recipient, p.account)
    if isinstance(p, AddFunds):
        return add_funds(state, tx.sender, p.amt)
    if isinstance(p, SendAllowance):
        return send_allowance(state, tx.sender, p.recipient, p.amount)
    raise TypeError(f"unknown payload {p!r}")


def apply_transaction(ledger: LedgerState, tx: Transaction) -> tuple[LedgerState, Receipt]:
    """Route a transaction; gas is charged per the flat table either way.

    A wrong nonce fails the whole transaction without consuming the
    nonce; any other guard failure still consumes it (the transaction
    was validly sequenced, it just did nothing).
    """
    gas = gas_for(tx.payload)
    expected = ledger.nonces.get(tx.sender, 0)
    if tx.nonce != expected:
        receipt = Receipt(tx_hash(tx), TxStatus.FAILED, ErrorCode.BAD_NONCE, gas, ())
        return ledger, receipt

    new_contract, result = _dispatch(ledger.contract, tx)
    nonces = dict(ledger.nonces)
    nonces[tx.sender] = expected + 1
    new_ledger = LedgerState(new_contract, nonces)
    if result.ok:
        receipt = Receipt(tx_hash(tx), TxStatus.SUCCESS, None, gas, result.events)
    else:
        receipt = Receipt(tx_hash(tx), TxStatus.FAILED, result.error, gas, ())
    return new_ledger, receipt


# --- canonical state encoding ----------------------------------------------

def serialize_state(state: ContractState) -> bytes:
    parts = [state.organization]
    parts.append(_u(len(state.recipients), 4))
    for addr in sorted(state.recipients):
        parts.append(addr)
        parts.append(_u(1 if state.recipients[addr] else 0, 1))
    parts.append(_u(len(state.bank_accounts), 4))
    for addr in sorted(state.bank_accounts):
        parts.append(addr)
        parts.append(state.bank_accounts[addr])
    parts.append(_u(len(state.balances), 4))
    for addr in sorted(state.balances):
        parts.append(addr)
        parts.append(_u(state.balances[addr], 16))
    parts.append(_u(1 if state.deployed else 0, 1))
    return b"".join(parts)


def state_root(state: ContractState) -> Hash256:
    return Hash256(keccak256(serialize_state(state)))


def state_to_json(state: ContractState) -> dict:
    return {
        "organization": hx(state.organization),
        "recipients": {hx(a): state.recipients[a] for a in sorted(state.recipients)},
        "bankAccounts": {hx(a): hx(state.bank_accounts[a])
                         for a in sorted(state.bank_accounts)},
        "balances": {hx(a): str(int(state.balances[a]))
                     for a in sorted(state.balances)},
    }


def execute_block_txs(ledger: LedgerState,
                      block: Block) -> tuple[LedgerState, list[Receipt]]:
    """Sequentially apply a block's transactions."""
    receipts = []
    for tx in block.txs:
        ledger, receipt = apply_transaction(ledger, tx)
        receipts.append(receipt)
    return ledger, receipts

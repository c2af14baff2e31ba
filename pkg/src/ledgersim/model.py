"""Core ledger data model and its canonical binary encoding.

Value types are immutable and hashable; every type serializes through a
bespoke fixed-order format (integers big-endian fixed-width, lists and
text length-prefixed) so that any two nodes agree byte-for-byte on
hashes. Deliberately not RLP or any wire-compatible encoding.

Widths: amounts are u128, heights/rounds/nonces/gas are u64, lengths are
u32, enum tags and booleans are u8.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Union

from .keccak import keccak256

AMOUNT_MAX = (1 << 128) - 1


class Address(bytes):
    """20-byte account identifier, rendered as 0x-prefixed lowercase hex."""

    def __new__(cls, value: bytes) -> "Address":
        if len(value) != 20:
            raise ValueError(f"address must be 20 bytes, got {len(value)}")
        return super().__new__(cls, value)

    def __repr__(self) -> str:
        return f"Address({hx(self)})"


class Hash256(bytes):
    """32-byte digest."""

    def __new__(cls, value: bytes) -> "Hash256":
        if len(value) != 32:
            raise ValueError(f"hash must be 32 bytes, got {len(value)}")
        return super().__new__(cls, value)

    def __repr__(self) -> str:
        return f"Hash256({hx(self)})"


class Amount(int):
    """Unsigned 128-bit currency amount; arithmetic errors instead of wrapping."""

    def __new__(cls, value: int) -> "Amount":
        if not 0 <= value <= AMOUNT_MAX:
            raise OverflowError(f"amount out of range: {value}")
        return super().__new__(cls, value)

    def __add__(self, other: int) -> "Amount":
        return Amount(int(self) + int(other))

    def __sub__(self, other: int) -> "Amount":
        return Amount(int(self) - int(other))


ZERO_ADDRESS = Address(bytes(20))
ZERO_HASH = Hash256(bytes(32))


def hx(data: bytes) -> str:
    return "0x" + data.hex()


def unhx(text: str) -> bytes:
    if not text.startswith("0x"):
        raise ValueError(f"expected 0x prefix: {text!r}")
    return bytes.fromhex(text[2:])


class Signature(bytes):
    """Opaque signature bytes; length is scheme-defined (32 for the mock)."""

    def __repr__(self) -> str:
        return f"Signature({hx(self)})"


# --- transaction payloads ------------------------------------------------

@dataclass(frozen=True, slots=True)
class Deploy:
    pass


@dataclass(frozen=True, slots=True)
class AddRecipient:
    recipient: Address


@dataclass(frozen=True, slots=True)
class RemoveRecipient:
    recipient: Address


@dataclass(frozen=True, slots=True)
class RegisterBankAccount:
    recipient: Address
    account: str


@dataclass(frozen=True, slots=True)
class AddFunds:
    amt: Amount


@dataclass(frozen=True, slots=True)
class SendAllowance:
    recipient: Address
    amount: Amount


TxPayload = Union[Deploy, AddRecipient, RemoveRecipient,
                  RegisterBankAccount, AddFunds, SendAllowance]

_PAYLOAD_TAGS = (Deploy, AddRecipient, RemoveRecipient,
                 RegisterBankAccount, AddFunds, SendAllowance)
_TAG_BY_TYPE = {cls: i for i, cls in enumerate(_PAYLOAD_TAGS)}


@dataclass(frozen=True, slots=True)
class Transaction:
    sender: Address
    nonce: int
    payload: TxPayload
    gas_limit: int
    gas_price: int
    signature: Signature


class TxStatus(enum.Enum):
    SUCCESS = "SUCCESS"
    FAILED = "FAILED"


class ErrorCode(enum.Enum):
    ALREADY_DEPLOYED = "AlreadyDeployed"
    NOT_DEPLOYED = "NotDeployed"
    UNAUTHORIZED = "Unauthorized"
    UNKNOWN_RECIPIENT = "UnknownRecipient"
    EMPTY_ACCOUNT_STRING = "EmptyAccountString"
    INSUFFICIENT_FUNDS = "InsufficientFunds"
    OVERFLOW = "Overflow"
    BAD_NONCE = "BadNonce"


@dataclass(frozen=True, slots=True)
class FundsAdded:
    value: Amount


@dataclass(frozen=True, slots=True)
class AllowanceSent:
    recipient: Address
    amount: Amount


@dataclass(frozen=True, slots=True)
class BankAccountRegistered:
    recipient: Address
    account_hash: Hash256


Event = Union[FundsAdded, AllowanceSent, BankAccountRegistered]

_EVENT_TAGS = (FundsAdded, AllowanceSent, BankAccountRegistered)
_EVENT_TAG_BY_TYPE = {cls: i for i, cls in enumerate(_EVENT_TAGS)}


@dataclass(frozen=True, slots=True)
class Receipt:
    tx_hash: Hash256
    status: TxStatus
    error: Optional[ErrorCode]
    gas_used: int
    events: tuple[Event, ...]

    def __post_init__(self) -> None:
        if self.status is TxStatus.FAILED:
            if self.error is None or self.events:
                raise ValueError("failed receipts carry an error and no events")
        elif self.error is not None:
            raise ValueError("success receipts carry no error code")


@dataclass(frozen=True, slots=True)
class Block:
    height: int
    round: int
    parent_hash: Hash256
    proposer: Address
    txs: tuple[Transaction, ...]
    state_root: Hash256
    commit_seals: tuple[tuple[Address, Signature], ...]


# --- canonical serialization ---------------------------------------------

def _u(value: int, width: int) -> bytes:
    if value < 0:
        raise ValueError("unsigned field is negative")
    return value.to_bytes(width, "big")


def _text(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _u(len(raw), 4) + raw


def _var_bytes(b: bytes) -> bytes:
    return _u(len(b), 4) + b


def serialize_payload(p: TxPayload) -> bytes:
    tag = _u(_TAG_BY_TYPE[type(p)], 1)
    if isinstance(p, Deploy):
        return tag
    if isinstance(p, AddRecipient):
        return tag + p.recipient
    if isinstance(p, RemoveRecipient):
        return tag + p.recipient
    if isinstance(p, RegisterBankAccount):
        return tag + p.recipient + _text(p.account)
    if isinstance(p, AddFunds):
        return tag + _u(p.amt, 16)
    if isinstance(p, SendAllowance):
        return tag + p.recipient + _u(p.amount, 16)
    raise TypeError(f"unknown payload {p!r}")


def serialize_tx(tx: Transaction, *, with_signature: bool = True) -> bytes:
    out = (tx.sender + _u(tx.nonce, 8) + serialize_payload(tx.payload)
           + _u(tx.gas_limit, 8) + _u(tx.gas_price, 8))
    if with_signature:
        out += _var_bytes(tx.signature)
    return out


def tx_hash(tx: Transaction) -> Hash256:
    return Hash256(keccak256(serialize_tx(tx, with_signature=False)))


def serialize_event(ev: Event) -> bytes:
    tag = _u(_EVENT_TAG_BY_TYPE[type(ev)], 1)
    if isinstance(ev, FundsAdded):
        return tag + _u(ev.value, 16)
    if isinstance(ev, AllowanceSent):
        return tag + ev.recipient + _u(ev.amount, 16)
    return tag + ev.recipient + ev.account_hash


def serialize_receipt(r: Receipt) -> bytes:
    status = _u(0 if r.status is TxStatus.SUCCESS else 1, 1)
    error = _u(0, 1) if r.error is None else \
        _u(1 + list(ErrorCode).index(r.error), 1)
    events = _u(len(r.events), 4) + b"".join(serialize_event(e) for e in r.events)
    return r.tx_hash + status + error + _u(r.gas_used, 8) + events


def serialize_block(block: Block, *, for_hash: bool = False) -> bytes:
    """Full encoding, or the hashing view that drops commit seals and round.

    The round is excluded from the hashing view so a proposal keeps its
    identity when it is re-proposed (and eventually sealed) in a later
    round; the seals are excluded so adding them never changes the hash.
    """
    parts = [_u(block.height, 8)]
    if not for_hash:
        parts.append(_u(block.round, 8))
    parts.append(block.parent_hash)
    parts.append(block.proposer)
    parts.append(_u(len(block.txs), 4))
    parts.extend(serialize_tx(t) for t in block.txs)
    parts.append(block.state_root)
    if not for_hash:
        parts.append(_u(len(block.commit_seals), 4))
        for addr, sig in block.commit_seals:
            parts.append(addr)
            parts.append(_var_bytes(sig))
    return b"".join(parts)


def block_hash(block: Block) -> Hash256:
    return Hash256(keccak256(serialize_block(block, for_hash=True)))


# --- deserialization ------------------------------------------------------

class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError("truncated input")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u(self, width: int) -> int:
        return int.from_bytes(self.take(width), "big")

    def done(self) -> bool:
        return self.pos == len(self.data)


def _read_payload(r: _Reader) -> TxPayload:
    tag = r.u(1)
    if tag >= len(_PAYLOAD_TAGS):
        raise ValueError(f"bad payload tag {tag}")
    cls = _PAYLOAD_TAGS[tag]
    if cls is Deploy:
        return Deploy()
    if cls is AddRecipient:
        return AddRecipient(Address(r.take(20)))
    if cls is RemoveRecipient:
        return RemoveRecipient(Address(r.take(20)))
    if cls is RegisterBankAccount:
        recipient = Address(r.take(20))
        return RegisterBankAccount(recipient, r.take(r.u(4)).decode("utf-8"))
    if cls is AddFunds:
        return AddFunds(Amount(r.u(16)))
    return SendAllowance(Address(r.take(20)), Amount(r.u(16)))


def _read_tx(r: _Reader) -> Transaction:
    sender = Address(r.take(20))
    nonce = r.u(8)
    payload = _read_payload(r)
    gas_limit = r.u(8)
    gas_price = r.u(8)
    signature = Signature(r.take(r.u(4)))
    return Transaction(sender, nonce, payload, gas_limit, gas_price, signature)


def deserialize_tx(data: bytes) -> Transaction:
    r = _Reader(data)
    tx = _read_tx(r)
    if not r.done():
        raise ValueError("trailing bytes after transaction")
    return tx


def deserialize_block(data: bytes) -> Block:
    r = _Reader(data)
    height = r.u(8)
    round_ = r.u(8)
    parent = Hash256(r.take(32))
    proposer = Address(r.take(20))
    txs = tuple(_read_tx(r) for _ in range(r.u(4)))
    state_root = Hash256(r.take(32))
    seals = tuple((Address(r.take(20)), Signature(r.take(r.u(4))))
                  for _ in range(r.u(4)))
    if not r.done():
        raise ValueError("trailing bytes after block")
    return Block(height, round_, parent, proposer, txs, state_root, seals)


# --- JSON codecs for chain artifacts ---------------------------------------

_PAYLOAD_NAMES = ("deploy", "addRecipient", "removeRecipient",
                  "registerBankAccount", "addFunds", "sendAllowance")
_PAYLOAD_BY_NAME = {n: c for n, c in zip(_PAYLOAD_NAMES, _PAYLOAD_TAGS)}


def payload_to_json(p: TxPayload) -> dict:
    obj: dict = {"type": _PAYLOAD_NAMES[_TAG_BY_TYPE[type(p)]]}
    if isinstance(p, (AddRecipient, RemoveRecipient)):
        obj["recipient"] = hx(p.recipient)
    elif isinstance(p, RegisterBankAccount):
        obj["recipient"] = hx(p.recipient)
        obj["account"] = p.account
    elif isinstance(p, AddFunds):
        obj["amt"] = str(int(p.amt))
    elif isinstance(p, SendAllowance):
        obj["recipient"] = hx(p.recipient)
        obj["amount"] = str(int(p.amount))
    return obj


def payload_from_json(obj: dict) -> TxPayload:
    cls = _PAYLOAD_BY_NAME.get(obj.get("type", ""))
    if cls is None:
        raise ValueError(f"unknown payload type {obj.get('type')!r}")
    if cls is Deploy:
        return Deploy()
    if cls is AddRecipient:
        return AddRecipient(Address(unhx(obj["recipient"])))
    if cls is RemoveRecipient:
        return RemoveRecipient(Address(unhx(obj["recipient"])))
    if cls is RegisterBankAccount:
        return RegisterBankAccount(Address(unhx(obj["recipient"])), obj["account"])
    if cls is AddFunds:
        return AddFunds(Amount(int(obj["amt"])))
    return SendAllowance(Address(unhx(obj["recipient"])), Amount(int(obj["amount"])))


def tx_to_json(tx: Transaction) -> dict:
    return {
        "sender": hx(tx.sender),
        "nonce": tx.nonce,
        "payload": payload_to_json(tx.payload),
        "gasLimit": tx.gas_limit,
        "gasPrice": tx.gas_price,
        "signature": hx(tx.signature),
        "hash": hx(tx_hash(tx)),
    }


def tx_from_json(obj: dict) -> Transaction:
    return Transaction(
        sender=Address(unhx(obj["sender"])),
        nonce=int(obj["nonce"]),
        payload=payload_from_json(obj["payload"]),
        gas_limit=int(obj["gasLimit"]),
        gas_price=int(obj["gasPrice"]),
        signature=Signature(unhx(obj["signature"])),
    )


def block_to_json(block: Block) -> dict:
    return {
        "height": block.height,
        "round": block.round,
        "parentHash": hx(block.parent_hash),
        "proposer": hx(block.proposer),
        "txs": [tx_to_json(t) for t in block.txs],
        "stateRoot": hx(block.state_root),
        "commitSeals": [[hx(a), hx(s)] for a, s in block.commit_seals],
        "hash": hx(block_hash(block)),
    }


def block_from_json(obj: dict) -> Block:
    return Block(
        height=int(obj["height"]),
        round=int(obj["round"]),
        parent_hash=Hash256(unhx(obj["parentHash"])),
        proposer=Address(unhx(obj["proposer"])),
        txs=tuple(tx_from_json(t) for t in obj["txs"]),
        state_root=Hash256(unhx(obj["stateRoot"])),
        commit_seals=tuple((Address(unhx(a)), Signature(unhx(s)))
                           for a, s in obj["commitSeals"]),
    )


def event_to_json(ev: Event) -> dict:
    if isinstance(ev, FundsAdded):
        return {"kind": "FundsAdded", "value": str(int(ev.value))}
    if isinstance(ev, AllowanceSent):
        return {"kind": "AllowanceSent", "recipient": hx(ev.recipient),
                "amount": str(int(ev.amount))}
    return {"kind": "BankAccountRegistered", "recipient": hx(ev.recipient),
            "accountHash": hx(ev.account_hash)}


def event_from_json(obj: dict) -> Event:
    kind = obj["kind"]
    if kind == "FundsAdded":
        return FundsAdded(Amount(int(obj["value"])))
    if kind == "AllowanceSent":
        return AllowanceSent(Address(unhx(obj["recipient"])), Amount(int(obj["amount"])))
    if kind == "BankAccountRegistered":
        return BankAccountRegistered(Address(unhx(obj["recipient"])),
                                     Hash256(unhx(obj["accountHash"])))
    raise ValueError(f"unknown event kind {kind!r}")


def receipt_to_json(r: Receipt) -> dict:
    return {
        "txHash": hx(r.tx_hash),
        "status": r.status.value,
        "error": None if r.error is None else r.error.value,
        "gasUsed": r.gas_used,
        "events": [event_to_json(e) for e in r.events],
    }

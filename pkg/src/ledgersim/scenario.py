"""Scripted scenarios: parse, run, report.

A scenario is declarative JSON: named, with an ordered list of client
commands at non-decreasing logical times, plus optional expectations
evaluated after the run. Actors are indices into the key provider's
active range; recipient and address parameters accept either an actor
index or a 0x-hex address.

Command actions:
    deploy | addRecipient | removeRecipient | registerBankAccount |
    addFunds | sendAllowance        -> signed transactions
    getBalance                      -> node-local read on every honest node
    injectFault                     -> {node: validator index, behavior}
    setGstNow                       -> stabilize the network now

Expectation kinds (all evaluated on honest nodes after the run):
    orgBalance{value} balance{address,value} minFinalizedHeight{value}
    noFinalization events{value:[...]} receiptStatus{command,status[,error]}
    queryResult{command,value} safety{value} convergedState

Artifacts written by run_scenario: chain.jsonl, events.jsonl,
state.json, report.json, consensus_trace.jsonl, network_trace.jsonl.
Exit codes: 0 all expectations hold, 2 unusable config or scenario,
3 expectation failure, 4 internal invariant violation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import contract
from .config import GenesisConfig, active_keys
from .crypto import KeyPair
from .errors import InternalInvariantViolation, MalformedScenario
from .model import (
    Address, AddFunds, AddRecipient, Amount, Deploy, Hash256,
    RegisterBankAccount, RemoveRecipient, SendAllowance, TxPayload,
    block_to_json, event_to_json, hx, unhx,
)
from .netsim import Behavior, ByzantineSpec
from .simulation import Simulation

DEFAULT_HORIZON = 2000

_TX_ACTIONS = ("deploy", "addRecipient", "removeRecipient",
               "registerBankAccount", "addFunds", "sendAllowance")
_ACTIONS = _TX_ACTIONS + ("getBalance", "injectFault", "setGstNow")


@dataclass(frozen=True)
class Command:
    at_time: int
    actor: int
    action: str
    params: dict


@dataclass(frozen=True)
class Scenario:
    name: str
    commands: tuple[Command, ...]
    expectations: tuple[dict, ...]
    horizon: int


def parse_scenario(data: bytes) -> Scenario:
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedScenario(f"scenario is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise MalformedScenario("scenario must be a JSON object")
    for required in ("name", "commands"):
        if required not in obj:
            raise MalformedScenario(f"missing field {required!r}")
    unknown = set(obj) - {"name", "commands", "expectations", "horizon"}
    if unknown:
        raise MalformedScenario(f"unknown fields {sorted(unknown)}")

    commands = []
    last_time = 0
    for i, raw in enumerate(obj["commands"]):
        if not isinstance(raw, dict):
            raise MalformedScenario(f"command {i} must be an object")
        missing = {"atTime", "actor", "action"} - set(raw)
        if missing:
            raise MalformedScenario(f"command {i}: missing {sorted(missing)}")
        action_obj = raw["action"]
        if not isinstance(action_obj, dict) or "type" not in action_obj:
            raise MalformedScenario(f"command {i}: action must carry a type")
        action = action_obj["type"]
        if action not in _ACTIONS:
            raise MalformedScenario(f"command {i}: unknown action {action!r}")
        at_time = int(raw["atTime"])
        if at_time < last_time:
            raise MalformedScenario("command times must be non-decreasing")
        last_time = at_time
        params = {k: v for k, v in action_obj.items() if k != "type"}
        commands.append(Command(at_time, int(raw["actor"]), action, params))

    horizon = int(obj.get("horizon", DEFAULT_HORIZON))
    expectations = tuple(obj.get("expectations", ()))
    return Scenario(str(obj["name"]), tuple(commands), expectations, horizon)


class _Runner:
    def __init__(self, genesis: GenesisConfig, scenario: Scenario,
                 seed: Optional[int]) -> None:
        self.genesis = genesis
        self.scenario = scenario
        self.keys = active_keys(genesis.key_provider)
        self.sim = Simulation(genesis, seed=seed, horizon=scenario.horizon)

    def _resolve_key(self, index: int) -> KeyPair:
        if not 0 <= index < len(self.keys):
            raise MalformedScenario(f"actor index {index} out of range")
        return self.keys[index]

    def _resolve_address(self, value) -> Address:
        if isinstance(value, int):
            return self._resolve_key(value).address
        if isinstance(value, str):
            return Address(unhx(value))
        raise MalformedScenario(f"cannot resolve address from {value!r}")

    def _payload(self, command: Command) -> TxPayload:
        action, p = command.action, command.params
        if action == "deploy":
            return Deploy()
        if action == "addRecipient":
            return AddRecipient(self._resolve_address(p["recipient"]))
        if action == "removeRecipient":
            return RemoveRecipient(self._resolve_address(p["recipient"]))
        if action == "registerBankAccount":
            return RegisterBankAccount(self._resolve_address(p["recipient"]),
                                       str(p["account"]))
        if action == "addFunds":
            return AddFunds(Amount(int(p["amt"])))
        if action == "sendAllowance":
            return SendAllowance(self._resolve_address(p["recipient"]),
                                 Amount(int(p["amount"])))
        raise MalformedScenario(f"not a transaction action: {action}")

    def schedule_all(self) -> None:
        for index, command in enumerate(self.scenario.commands):
            if command.action in _TX_ACTIONS:
                key = self._resolve_key(command.actor)
                self.sim.schedule_tx(command.at_time, key,
                                     self._payload(command), label=index)
            elif command.action == "getBalance":
                target = command.params.get("address", command.actor)
                self.sim.schedule_query(command.at_time,
                                        self._resolve_address(target),
                                        label=index)
            elif command.action == "injectFault":
                node_index = int(command.params["node"])
                validators = self.sim.config.validators
                if not 0 <= node_index < len(validators):
                    raise MalformedScenario(f"fault node {node_index} out of range")
                try:
                    behavior = Behavior(command.params["behavior"])
                except ValueError:
                    raise MalformedScenario(
                        f"unknown behavior {command.params['behavior']!r}") from None
                self.sim.schedule_fault(
                    command.at_time,
                    ByzantineSpec(validators[node_index], behavior))
            else:
                self.sim.schedule_set_gst(command.at_time)

    def run(self) -> None:
        self.schedule_all()
        self.sim.run()


def _evaluate_expectations(runner: _Runner) -> list[dict]:
    sim = runner.sim
    ref = sim.reference_node()
    results = []
    contract_state = ref.chain.head_ledger.contract

    def balance_of(address: Address) -> int:
        return int(contract_state.balances.get(address, 0))

    for index, exp in enumerate(runner.scenario.expectations):
        kind = exp.get("kind")
        ok = False
        detail = ""
        try:
            if kind == "orgBalance":
                got = balance_of(contract_state.organization)
                ok = got == int(exp["value"])
                detail = f"organization balance {got}"
            elif kind == "balance":
                address = runner._resolve_address(exp["address"])
                got = balance_of(address)
                ok = got == int(exp["value"])
                detail = f"balance[{hx(address)}] = {got}"
            elif kind == "minFinalizedHeight":
                got = sim.min_honest_height()
                ok = got >= int(exp["value"])
                detail = f"min honest height {got}"
            elif kind == "noFinalization":
                got = max(sim.finalized_height(a) for a in sim.honest_addresses())
                ok = got == 0
                detail = f"max honest height {got}"
            elif kind == "events":
                got = [event_to_json(rec.event) for rec in ref.chain.events]
                want = exp["value"]
                ok = len(got) == len(want) and all(
                    all(g.get(k) == v for k, v in w.items())
                    for g, w in zip(got, want))
                detail = f"{len(got)} events"
            elif kind == "receiptStatus":
                target = int(exp["command"])
                record = next((s for s in sim.submissions
                               if s["label"] == target), None)
                if record is None:
                    detail = "no submission for command"
                else:
                    receipt = ref.chain.receipts.get(
                        Hash256(unhx(record["txHash"])))
                    if receipt is None:
                        detail = "transaction never finalized"
                    else:
                        ok = receipt.status.value == exp["status"]
                        if ok and "error" in exp:
                            got_err = None if receipt.error is None \
                                else receipt.error.value
                            ok = got_err == exp["error"]
                        detail = (f"status {receipt.status.value}"
                                  f" error {receipt.error.value if receipt.error else None}")
            elif kind == "queryResult":
                target = int(exp["command"])
                record = next((q for q in sim.queries
                               if q["label"] == target), None)
                if record is None:
                    detail = "no query for command"
                else:
                    values = {v["value"] for v in record["values"]}
                    ok = values == {str(exp["value"])}
                    detail = f"values {sorted(values)}"
            elif kind == "safety":
                got = sim.safety_violation is None
                ok = got == bool(exp.get("value", True))
                detail = f"safe={got}"
            elif kind == "convergedState":
                # honest heads may differ by in-flight heartbeat blocks at
                # the cutoff instant, but their contract state must agree,
                # as must every block up to the common finalized height
                honest = sim.honest_addresses()
                roots = {sim.nodes[a].chain.head.state_root for a in honest}
                common = min(sim.finalized_height(a) for a in honest)
                prefix_ok = all(
                    sim.nodes[a].chain.blocks[h].state_root ==
                    sim.nodes[honest[0]].chain.blocks[h].state_root
                    for a in honest for h in range(common + 1))
                ok = len(roots) == 1 and prefix_ok
                detail = f"head roots {len(roots)}, common height {common}"
            else:
                detail = f"unknown expectation kind {kind!r}"
        except (KeyError, ValueError, TypeError, MalformedScenario) as exc:
            detail = f"unevaluable: {exc}"
        results.append({"index": index, "kind": kind, "ok": ok, "detail": detail})
    return results


def build_report(runner: _Runner, expectation_results: list[dict]) -> dict:
    sim = runner.sim
    genesis = runner.genesis
    honest = sim.honest_addresses()
    conservation = {hx(a): sim.conservation_ok(a) for a in sim.config.validators}
    report = {
        "scenario": runner.scenario.name,
        "config": {
            "networkId": genesis.network_id,
            "blockGasLimit": genesis.block_gas_limit,
            "gasPrice": genesis.gas_price,
            "validators": [hx(a) for a in sim.config.validators],
            "gst": genesis.gst,
            "delta": genesis.delta,
            "preGstMaxDelay": genesis.pre_gst_max_delay,
            "preGstLossProb": genesis.pre_gst_loss_prob,
            "baseRoundTimeout": genesis.base_round_timeout,
            "seed": sim.seed,
            "horizon": runner.scenario.horizon,
        },
        "finalizedHeight": {hx(a): sim.finalized_height(a)
                            for a in sim.config.validators},
        "stateRoots": {hx(a): hx(sim.nodes[a].chain.head.state_root)
                       for a in sim.config.validators},
        "honest": [hx(a) for a in honest],
        "safety": sim.safety_violation is None,
        "safetyViolation": sim.safety_violation,
        "conservation": conservation,
        "submissions": sim.submissions,
        "queries": sim.queries,
        "expectations": expectation_results,
    }
    return report


def run_scenario(genesis: GenesisConfig, scenario: Scenario, *,
                 seed: Optional[int] = None,
                 out_dir: Optional[Path] = None) -> tuple[int, dict]:
    """Execute a scenario and write artifacts; returns (exit code, report)."""
    runner = _Runner(genesis, scenario, seed)
    try:
        runner.run()
    except (InternalInvariantViolation, AssertionError) as exc:
        report = {"scenario": scenario.name, "internalError": str(exc)}
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "report.json").write_bytes(_dump_json(report))
        return 4, report

    sim = runner.sim
    expectation_results = _evaluate_expectations(runner)
    report = build_report(runner, expectation_results)

    invariant_broken = (sim.safety_violation is not None
                        or not all(report["conservation"].values()))
    expectations_failed = not all(r["ok"] for r in expectation_results)
    exit_code = 4 if invariant_broken else (3 if expectations_failed else 0)
    report["exitCode"] = exit_code

    if out_dir is not None:
        _write_artifacts(runner, report, out_dir)
    return exit_code, report


def _dump_json(obj: dict) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def _write_artifacts(runner: _Runner, report: dict, out_dir: Path) -> None:
    sim = runner.sim
    ref = sim.reference_node()
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "chain.jsonl", "w", encoding="utf-8") as fh:
        for block in ref.chain.blocks:
            fh.write(json.dumps(block_to_json(block), sort_keys=True) + "\n")

    with open(out_dir / "events.jsonl", "w", encoding="utf-8") as fh:
        for rec in ref.chain.events:
            obj = {"height": rec.height, "txIndex": rec.tx_index,
                   "emissionIndex": rec.emission_index}
            obj.update(event_to_json(rec.event))
            fh.write(json.dumps(obj, sort_keys=True) + "\n")

    state = ref.chain.head_ledger.contract
    (out_dir / "state.json").write_bytes(_dump_json(contract.state_to_json(state)))

    (out_dir / "report.json").write_bytes(_dump_json(report))

    with open(out_dir / "consensus_trace.jsonl", "w", encoding="utf-8") as fh:
        for entry in sim.consensus_trace or ():
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    with open(out_dir / "network_trace.jsonl", "w", encoding="utf-8") as fh:
        for entry in sim.net_trace or ():
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

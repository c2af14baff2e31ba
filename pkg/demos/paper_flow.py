#!/usr/bin/env python3
"""The full disbursement flow on a four-validator network.

An organization deploys the contract, registers a recipient with a
bank account, funds its own balance and sends an allowance. Every
validator executes the same finalized blocks, so balances, events and
reads agree everywhere. The recipient's on-ledger balance stays zero:
the payout itself is off-ledger and is signaled by the AllowanceSent
event.
"""

from pathlib import Path

from ledgersim import (
    AddFunds, AddRecipient, Amount, Deploy, RegisterBankAccount,
    SendAllowance, Simulation, parse_genesis,
)

GENESIS = Path(__file__).resolve().parent.parent / "scenarios" / "genesis_paper.json"


def main():
    genesis = parse_genesis(GENESIS.read_bytes())
    sim = Simulation(genesis, horizon=600)
    org = sim.validator_keys[0]
    recipient = sim.validator_keys[1]

    print(f"organization: 0x{org.address.hex()}")
    print(f"recipient:    0x{recipient.address.hex()}")
    print()

    sim.schedule_tx(0, org, Deploy())
    sim.schedule_tx(5, org, AddRecipient(recipient.address))
    sim.schedule_tx(10, org, RegisterBankAccount(recipient.address, "IBAN-0001"))
    sim.schedule_tx(15, org, AddFunds(Amount(1000)))
    sim.schedule_tx(20, org, SendAllowance(recipient.address, Amount(300)))
    sim.run()

    print("per-validator view after the run:")
    for i, address in enumerate(sim.config.validators):
        node = sim.nodes[address]
        state = node.chain.head_ledger.contract
        org_balance = int(state.balances.get(org.address, 0))
        print(f"  validator {i}: height {node.chain.head_height:>3}, "
              f"org balance {org_balance}, "
              f"recipient balance {int(state.balances.get(recipient.address, 0))}")

    print()
    print("event log (identical on every honest node):")
    for cursor, event in sim.reference_node().poll_events(0):
        print(f"  {cursor}. {type(event).__name__}: {event}")

    print()
    balance = sim.reference_node().get_balance(org.address)
    print(f"getBalance(organization) -> {int(balance)}  (1000 added - 300 sent)")
    assert int(balance) == 700


if __name__ == "__main__":
    main()

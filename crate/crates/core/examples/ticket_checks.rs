//! Drives an epoch table by hand: commit epochs, watch the regime switch,
//! and ask `verify_ticket` about a few proposals.

use ticketforge::ticketing::{htr_init, verify_ticket, EpochParams, Signer, TicketProof};
use ticketforge::types::{EpochNumber, NodeId, SlotNumber};

fn main() {
    let params = EpochParams {
        n: 4,
        f: 1,
        epoch_len: 4,
        concurrency: 2,
        seed: vec![0x2a],
    };
    let mut table = htr_init(params).expect("valid parameters");

    let rr = TicketProof::RoundRobin { slot: SlotNumber(1) };
    println!(
        "slot 1, node 0, round robin: {:?}",
        verify_ticket(&table, SlotNumber(1), NodeId(0), &rr)
    );
    println!(
        "slot 1, node 2, round robin: {:?}",
        verify_ticket(&table, SlotNumber(1), NodeId(2), &rr)
    );
    let far = TicketProof::RoundRobin { slot: SlotNumber(9) };
    println!(
        "slot 9 before epoch 1 commits: {:?}",
        verify_ticket(&table, SlotNumber(9), NodeId(0), &far)
    );

    // Every node filled its slot: the epoch two ahead becomes managed.
    let all = [0, 1, 2, 3].map(|i| Some(NodeId(i)));
    let e3 = table.on_epoch_committed(EpochNumber(1), &all).unwrap().unwrap();
    println!("epoch 3: TR={} C={:?}", e3.regime.as_tr(), e3.candidates);

    let server = e3.regime.server().expect("managed");
    let sn = SlotNumber(9);
    let grant = TicketProof::ServerGrant {
        slot: sn,
        grantee: NodeId(1),
        server,
        auth: Signer::new(server).sign_grant(sn, NodeId(1)),
    };
    println!(
        "slot 9 granted to node 1: {:?}",
        verify_ticket(&table, sn, NodeId(1), &grant)
    );
    println!(
        "same grant presented by node 2: {:?}",
        verify_ticket(&table, sn, NodeId(2), &grant)
    );

    // A skip in epoch 2 forces epoch 4 back to round robin over the
    // nodes that did propose.
    let e4 = table
        .on_epoch_committed(
            EpochNumber(2),
            &[None, Some(NodeId(1)), Some(NodeId(2)), Some(NodeId(3))],
        )
        .unwrap()
        .unwrap();
    println!("epoch 4: TR={} C={:?}", e4.regime.as_tr(), e4.candidates);
}

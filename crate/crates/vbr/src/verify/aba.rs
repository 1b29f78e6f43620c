//! Scripted slot-recycling interference.
//!
//! Two contexts share a list of one key. The first context prepares an
//! insert and stalls right before its publish compare-exchange. The second
//! context removes the insert's anchor node, retires it, and recycles the
//! same slot into a different key at a different position. The stalled
//! compare-exchange then fires:
//!
//! * through the versioned write it must fail, because the recycled slot
//!   carries a fresh birth epoch and the stored link version moved;
//! * through the deliberately unversioned write it succeeds on the matching
//!   slot number alone and corrupts the chain.

use std::sync::Arc;

use crate::cell::Key;
use crate::pool::PoolConfig;
use crate::reclaim::Reclaimer;
use crate::vbr::Vbr;

pub struct AbaReport {
    /// Whether the stalled compare-exchange went through.
    pub cas_succeeded: bool,
    /// Whether the final chain is corrupt: out of order, or the recycled
    /// key unreachable.
    pub anomaly: bool,
    /// User keys on the chain after the script, in walk order.
    pub keys: Vec<Key>,
}

/// The stalled write goes through the versioned compare-exchange. Expected
/// outcome: the write fails and the chain stays sound.
pub fn run_aba_guarded() -> AbaReport {
    run_script(|vbr, view| {
        let ok = vbr.update_link(view.head, Some(view.anchor), Some(view.fresh));
        (ok, false)
    })
}

/// The stalled write goes through the pointer-only compare-exchange.
/// Expected outcome: the write succeeds and corrupts the chain.
#[cfg(feature = "mutation")]
pub fn run_aba_mutated() -> AbaReport {
    run_script(|vbr, view| {
        let ok = vbr.unversioned_update_link(view.head, Some(view.anchor), Some(view.fresh));
        (ok, ok)
    })
}

/// What the stalled thread sees when it wakes up.
struct StallView {
    head: crate::cell::NodeRef,
    /// The node the stalled insert read as its successor, first life.
    anchor: crate::cell::NodeRef,
    /// The stalled thread's own, still unpublished node.
    fresh: crate::cell::NodeRef,
}

fn run_script<F>(stalled_cas: F) -> AbaReport
where
    F: FnOnce(&Vbr, &StallView) -> (bool, bool),
{
    let vbr = Arc::new(
        Vbr::new(2, PoolConfig { slots_per_thread: 8, retired_threshold: 1, steal_batch: 4 })
            .expect("nonzero arena"),
    );
    let mut interferer = vbr.register();
    let mut stalled = vbr.register();

    // Interferer builds head -> anchor(20) -> tail.
    vbr.checkpoint_install(&mut interferer);
    let tail = expect_node(vbr.alloc(&mut interferer, Key::MAX));
    let anchor = expect_node(vbr.alloc(&mut interferer, 20));
    let head = expect_node(vbr.alloc(&mut interferer, Key::MIN));
    assert!(vbr.update_link(anchor, None, Some(tail)), "scripted build");
    assert!(vbr.update_link(head, None, Some(anchor)), "scripted build");
    vbr.note_published(&mut interferer, tail);
    vbr.note_published(&mut interferer, anchor);
    vbr.note_published(&mut interferer, head);
    vbr.end_op(&mut interferer);

    // Stalled thread prepares insert of 15 before the anchor, then halts
    // right before publishing.
    vbr.checkpoint_install(&mut stalled);
    let seen_anchor = vbr
        .get_next(&mut stalled, head)
        .expect("scripted read")
        .expect("head links onward");
    assert_eq!(vbr.get_key(&mut stalled, seen_anchor), Ok(20), "scripted read");
    let fresh = expect_node(vbr.alloc(&mut stalled, 15));
    assert!(vbr.update_link(fresh, None, Some(seen_anchor)), "scripted build");

    // Interferer removes the anchor: mark, unlink, retire.
    vbr.checkpoint_install(&mut interferer);
    assert!(vbr.mark(anchor), "scripted removal");
    let succ = vbr.get_next(&mut interferer, anchor).expect("scripted read");
    assert!(vbr.update_link(head, Some(anchor), succ), "scripted removal");
    vbr.record_pending_retire(&mut interferer, anchor);
    vbr.retire(&mut interferer, anchor).expect("stamp within the epoch");
    vbr.end_op(&mut interferer);

    // Force the next allocation onto the retired slot: with an empty free
    // list the recycled slot is the only candidate. The first attempt must
    // bounce off the matching epoch and advance it.
    let parked = vbr.drain_local_free(&mut interferer);
    vbr.checkpoint_install(&mut interferer);
    match vbr.alloc(&mut interferer, 5) {
        Ok(Err(crate::reclaim::Restart)) => {}
        other => panic!("recycling must first advance the epoch, got {other:?}"),
    }
    vbr.rollback(&mut interferer);
    let recycled = expect_node(vbr.alloc(&mut interferer, 5));
    assert_eq!(recycled.slot, anchor.slot, "the drained pool leaves one slot");
    assert!(recycled.birth > anchor.birth, "rebirth under a later epoch");
    assert!(vbr.update_link(recycled, None, Some(tail)), "scripted build");
    assert!(vbr.update_link(head, Some(tail), Some(recycled)), "scripted insert");
    vbr.note_published(&mut interferer, recycled);
    vbr.end_op(&mut interferer);
    vbr.restore_local_free(&mut interferer, &parked);

    // The stalled thread wakes and fires its publish.
    let view = StallView { head, anchor: seen_anchor, fresh };
    let (cas_succeeded, published) = stalled_cas(&vbr, &view);
    if published {
        vbr.note_published(&mut stalled, fresh);
    } else {
        vbr.abandon(&mut stalled, fresh);
    }
    vbr.end_op(&mut stalled);

    // Audit the chain.
    vbr.checkpoint_install(&mut stalled);
    let mut keys = Vec::new();
    let mut curr = vbr
        .get_next(&mut stalled, head)
        .expect("quiescent read")
        .expect("head links onward");
    loop {
        let k = vbr.get_key(&mut stalled, curr).expect("quiescent read");
        if k == Key::MAX {
            break;
        }
        keys.push(k);
        curr = vbr
            .get_next(&mut stalled, curr)
            .expect("quiescent read")
            .expect("chain ends at the tail");
    }
    vbr.end_op(&mut stalled);
    let sorted = keys.windows(2).all(|w| w[0] < w[1]);
    let anomaly = !sorted || !keys.contains(&5);
    AbaReport { cas_succeeded, anomaly, keys }
}

fn expect_node(
    r: Result<crate::reclaim::Outcome<crate::cell::NodeRef>, crate::pool::PoolExhausted>,
) -> crate::cell::NodeRef {
    r.expect("arena sized for the script").expect("no recycling at this step")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn versioned_write_rejects_the_recycled_slot() {
        for _ in 0..10 {
            let rep = run_aba_guarded();
            assert!(!rep.cas_succeeded, "stale publish must fail");
            assert!(!rep.anomaly, "chain stays sound: {:?}", rep.keys);
            assert_eq!(rep.keys, vec![5]);
        }
    }

    #[cfg(feature = "mutation")]
    #[test]
    fn pointer_only_write_corrupts_the_chain() {
        for _ in 0..10 {
            let rep = run_aba_mutated();
            assert!(rep.cas_succeeded, "slot numbers alone cannot tell the lives apart");
            assert!(rep.anomaly, "expected a corrupt chain, got {:?}", rep.keys);
        }
    }
}

//! Operadic laws of substitution: identity, associativity, and closure of
//! validity, checked structurally over randomly generated diagrams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dils_core::diagram::{identity_diagram, substitute, BoxId, DiagramTree, SubstituteError};
use dils_core::testkit::{random_diagram, random_diagram_with_outer, random_tree, GenConfig};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn left_unit_law_over_random_diagrams() {
    let mut rng = rng(11);
    let cfg = GenConfig::default();
    for case in 0..50 {
        let guest = random_diagram(&mut rng, &cfg);
        let host = identity_diagram(&guest.outer);
        let result = substitute(&host, &BoxId::from("inner"), &guest)
            .unwrap_or_else(|e| panic!("case {case}: {e}"));
        assert!(result.validate().is_ok(), "case {case}");
        assert!(result.canonically_equal(&guest), "case {case}");
    }
}

#[test]
fn right_unit_law_over_random_diagrams() {
    let mut rng = rng(12);
    let cfg = GenConfig::default();
    for case in 0..50 {
        let host = random_diagram(&mut rng, &cfg);
        for slot in host.inner.keys() {
            let result = substitute(&host, slot, &identity_diagram(&host.inner[slot]))
                .unwrap_or_else(|e| panic!("case {case} slot {slot}: {e}"));
            assert!(result.validate().is_ok(), "case {case} slot {slot}");
            assert!(result.canonically_equal(&host), "case {case} slot {slot}");
        }
    }
}

/// Pick a random box id of a diagram.
fn pick_slot(rng: &mut ChaCha8Rng, d: &dils_core::WiringDiagram) -> BoxId {
    use rand::Rng;
    let ids: Vec<&BoxId> = d.inner.keys().collect();
    ids[rng.random_range(0..ids.len())].clone()
}

#[test]
fn associativity_over_random_triples() {
    let mut rng = rng(13);
    // no pass-throughs here so every substitution is defined
    let cfg = GenConfig { allow_pass_through: false, ..GenConfig::default() };
    let mut checked = 0;
    while checked < 100 {
        let d1 = random_diagram(&mut rng, &cfg);
        let b = pick_slot(&mut rng, &d1);
        let d2 = random_diagram_with_outer(&mut rng, &cfg, &d1.inner[&b]);
        let c = pick_slot(&mut rng, &d2);
        let d3 = random_diagram_with_outer(&mut rng, &cfg, &d2.inner[&c]);

        let lhs = substitute(&substitute(&d1, &b, &d2).unwrap(), &b.join(&c), &d3).unwrap();
        let rhs = substitute(&d1, &b, &substitute(&d2, &c, &d3).unwrap()).unwrap();
        assert_eq!(lhs, rhs, "triple {checked}: substitution must associate exactly");
        assert!(lhs.validate().is_ok());
        checked += 1;
    }
}

#[test]
fn associativity_with_pass_throughs_fails_identically_or_agrees() {
    let mut rng = rng(14);
    let cfg = GenConfig::default();
    let mut agreements = 0;
    for case in 0..100 {
        let d1 = random_diagram(&mut rng, &cfg);
        let b = pick_slot(&mut rng, &d1);
        let d2 = random_diagram_with_outer(&mut rng, &cfg, &d1.inner[&b]);
        let c = pick_slot(&mut rng, &d2);
        let d3 = random_diagram_with_outer(&mut rng, &cfg, &d2.inner[&c]);

        let lhs = substitute(&d1, &b, &d2)
            .and_then(|h| substitute(&h, &b.join(&c), &d3));
        let inner = substitute(&d2, &c, &d3);
        let rhs = inner.and_then(|g| substitute(&d1, &b, &g));
        match (lhs, rhs) {
            (Ok(l), Ok(r)) => {
                assert_eq!(l, r, "case {case}");
                agreements += 1;
            }
            (Err(SubstituteError::PassThroughCycle { .. }), Err(_))
            | (Err(_), Err(SubstituteError::PassThroughCycle { .. })) => {}
            (l, r) => panic!("case {case}: orders disagree: {l:?} vs {r:?}"),
        }
    }
    assert!(agreements > 50, "most random cases should compose ({agreements}/100)");
}

#[test]
fn single_feed_preserved_by_substitution() {
    let mut rng = rng(15);
    let cfg = GenConfig { allow_pass_through: false, ..GenConfig::default() };
    for _ in 0..50 {
        let host = random_diagram(&mut rng, &cfg);
        let slot = pick_slot(&mut rng, &host);
        let guest = random_diagram_with_outer(&mut rng, &cfg, &host.inner[&slot]);
        let result = substitute(&host, &slot, &guest).unwrap();
        let feeds = result.feeds();
        for dest in result.destinations() {
            assert!(feeds.contains_key(&dest), "unfed {dest:?}");
        }
        assert_eq!(feeds.len(), result.wires.len(), "a dest fed twice");
        assert!(result.validate().is_ok());
    }
}

/// Flatten by substituting parents before children (the other association
/// order); must agree with the bottom-up fold in `DiagramTree::flatten`.
fn flatten_top_down(tree: &DiagramTree) -> Result<dils_core::WiringDiagram, SubstituteError> {
    let mut flat = tree.diagram.clone();
    let mut queue: Vec<(BoxId, &DiagramTree)> =
        tree.children.iter().map(|(slot, child)| (slot.clone(), child)).collect();
    while !queue.is_empty() {
        let (slot_path, child) = queue.remove(0);
        flat = substitute(&flat, &slot_path, &child.diagram)?;
        for (cslot, gchild) in &child.children {
            queue.push((slot_path.join(cslot), gchild));
        }
    }
    Ok(flat)
}

#[test]
fn flatten_association_orders_agree() {
    let mut rng = rng(16);
    let cfg = GenConfig { allow_pass_through: false, ..GenConfig::default() };
    for case in 0..50 {
        let tree = random_tree(&mut rng, &cfg, 3);
        let bottom_up = tree.flatten().unwrap_or_else(|e| panic!("case {case}: {e}"));
        let top_down = flatten_top_down(&tree).unwrap_or_else(|e| panic!("case {case}: {e}"));
        assert_eq!(bottom_up, top_down, "case {case}");
        assert!(bottom_up.validate().is_ok(), "case {case}");
    }
}

#[test]
fn flatten_of_identity_chain_is_the_leaf() {
    let mut rng = rng(17);
    let cfg = GenConfig::default();
    for _ in 0..20 {
        let leaf = random_diagram(&mut rng, &cfg);
        let mid = identity_diagram(&leaf.outer);
        let top = identity_diagram(&leaf.outer);
        let tree = DiagramTree::leaf(top).with_child(
            "inner",
            DiagramTree::leaf(mid).with_child("inner", DiagramTree::leaf(leaf.clone())),
        );
        let flat = tree.flatten().unwrap();
        assert!(flat.canonically_equal(&leaf));
    }
}

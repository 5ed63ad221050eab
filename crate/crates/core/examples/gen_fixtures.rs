//! One-off fixture generator (not shipped; run manually).
use std::fmt::Write as _;

use dils_core::csvio::format_f64;
use dils_core::diagram::{substitute, BoxId, DiagramTree};
use dils_core::dsl::{parse, serialize, Document};
use dils_core::dynamics::{not_from_nand_diagram, or_skeleton_diagram};
use dils_core::testkit::{routing_network, routing_stream};
use rand_chacha::rand_core::SeedableRng;

fn main() {
    // golden flat form of the nested NOT/OR document: manual double substitution
    let mut flat = or_skeleton_diagram();
    for slot in ["not0", "not1"] {
        flat = substitute(&flat, &BoxId::from(slot), &not_from_nand_diagram()).unwrap();
    }
    let nested = parse(&std::fs::read_to_string("fixtures/nested_not_or.wd").unwrap()).unwrap();
    let golden = Document { tree: DiagramTree::leaf(flat), attachments: nested.attachments };
    std::fs::write("fixtures/nested_not_or_flat.golden.wd", serialize(&golden)).unwrap();

    // routing network JSON + stream CSV (seed 1000, target = line 1)
    let net = routing_network();
    std::fs::write(
        "fixtures/routing_network.json",
        serde_json::to_string_pretty(&net).unwrap() + "\n",
    )
    .unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000);
    let stream = routing_stream(&mut rng, 2000, 1);
    let mut csv = String::from("x0,x1,y0\n");
    for (x, y) in &stream {
        let _ = writeln!(csv, "{},{},{}", format_f64(x[0]), format_f64(x[1]), format_f64(y[0]));
    }
    std::fs::write("fixtures/routing_stream.csv", csv).unwrap();
    println!("fixtures written");
}

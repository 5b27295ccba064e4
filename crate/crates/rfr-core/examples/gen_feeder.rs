//! Regenerates the bundled synthetic feeder document from its builder.
fn main() {
    let net = rfr_core::fixtures::build_feeder();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/feeder.json");
    std::fs::write(path, net.to_document()).expect("write feeder fixture");
    println!("wrote {path}");
}

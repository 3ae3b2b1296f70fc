//! The book's configuration reference is generated from the defaults. Run
//! with `ACFRONT_BLESS=1` to regenerate it after changing a default.

use acfront::config::RunConfig;

const PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../book/src/config-reference.md");

fn render() -> String {
    format!(
        "# Configuration reference\n\n\
         Every key accepted by `--config`, with its default. A file only needs\n\
         the keys it changes; absent keys keep the defaults of their enclosing\n\
         section. Unknown keys are rejected.\n\n\
         `solve.init` and the other `init` tables are tagged by `kind`:\n\
         `balanced-cosh` (`a_eff`, `skew`), `v-shape` (`alpha`), `planar`\n\
         (`shift`), `two-layer-column` (`l`) or `case-one` (`k1`, `height`).\n\
         An `a_eff` of zero takes the fitted interaction constant.\n\n\
         Keys without a default, and so absent below: `task` (must match the\n\
         subcommand when given), `potential.a` (tilt of `tilted-quartic`),\n\
         `potential.table` (CSV `u,F` for `tabulated`, relative to the config\n\
         file), `levels.field` and `diagnose.field` (field CSV; defaults to\n\
         the `solve` output).\n\n\
         ```toml\n{}```\n",
        RunConfig::reference()
    )
}

#[test]
fn book_reference_matches_the_defaults() {
    let expected = render();
    if std::env::var_os("ACFRONT_BLESS").is_some() {
        std::fs::write(PATH, &expected).unwrap();
    }
    let found = std::fs::read_to_string(PATH).unwrap_or_default();
    assert!(found == expected, "book/src/config-reference.md is stale; rerun with ACFRONT_BLESS=1");
}

#[test]
fn reference_parses_back_to_the_defaults() {
    assert_eq!(RunConfig::parse(&RunConfig::reference()).unwrap(), RunConfig::default());
}

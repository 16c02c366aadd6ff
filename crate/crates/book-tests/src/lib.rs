//! Doc-test bridge for the guide in `book/`.
//!
//! Each chapter is included verbatim as the documentation of an empty
//! module, so `cargo test` compiles and runs every Rust code block in the
//! book against the current library. A chapter that drifts from the API
//! fails the build; a snippet whose assertion breaks fails the test run.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/chord-diagrams.md")]
pub mod chord_diagrams {}

#[doc = include_str!("../../../book/src/models-and-weights.md")]
pub mod models_and_weights {}

#[doc = include_str!("../../../book/src/rhombic-tilings.md")]
pub mod rhombic_tilings {}

#[doc = include_str!("../../../book/src/enumeration.md")]
pub mod enumeration {}

#[doc = include_str!("../../../book/src/the-observable.md")]
pub mod the_observable {}

#[doc = include_str!("../../../book/src/hexagons.md")]
pub mod hexagons {}

#[doc = include_str!("../../../book/src/dilute-reduction.md")]
pub mod dilute_reduction {}

#[doc = include_str!("../../../book/src/z-invariance.md")]
pub mod z_invariance {}

#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}

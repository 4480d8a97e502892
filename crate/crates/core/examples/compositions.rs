//! Build the synthetic reference library and the four training-set
//! compositions, then show how often each source is repeated.

use epidiff::dataset::{compose, fixture, DatasetComposition};
use epidiff::encoding::SourceTag;

fn main() -> epidiff::Result<()> {
    let library = fixture::reference_library(0)?;
    println!(
        "library: {} surveillance, {} modeled frames",
        library.count(SourceTag::Surveillance),
        library.count(SourceTag::Modeled)
    );
    for name in ["100S", "100M", "30S70M", "70S30M"] {
        let set = compose(&library, &DatasetComposition::preset(name)?, 0)?;
        let counts = set.sample_counts();
        let most = set.multiplicities().values().copied().max().unwrap_or(0);
        println!(
            "{name:<7} {:>5} unique / {:>5} total  (surveillance {}, modeled {}; most repeated frame x{most})",
            set.n_unique(),
            set.len(),
            counts.get(&SourceTag::Surveillance).unwrap_or(&0),
            counts.get(&SourceTag::Modeled).unwrap_or(&0),
        );
    }
    Ok(())
}

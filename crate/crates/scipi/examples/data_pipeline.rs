//! Round-trip the data layer: sample a Poisson matrix at a target
//! sparsity, write and reload it in bag-of-words form, verify the
//! manifest, and filter near-empty rows and columns.

use scipi::data::{
    gen_poisson, load_bag_of_words, preprocess_min_sum, write_bag_of_words, DatasetManifest,
    FormatTag, SyntheticSpec,
};
use scipi::matrix::CountMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec::new(200, 120, 0.15, 5)?;
    let m = gen_poisson(&spec)?;
    let wrapped = CountMatrix::Sparse(m.clone());
    println!(
        "sampled {}x{} with {} nonzeros (nonzero fraction {:.4}, target {})",
        wrapped.rows(),
        wrapped.cols(),
        wrapped.nnz(),
        wrapped.density(),
        spec.sparsity
    );

    let dir = std::env::temp_dir().join(format!("scipi-data-demo-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("counts.txt");
    write_bag_of_words(&path, &m)?;
    let reloaded = CountMatrix::Sparse(load_bag_of_words(&path)?);

    let manifest =
        DatasetManifest::describe("counts", "synthetic", FormatTag::BagOfWords, &wrapped);
    println!(
        "reloaded from {}: manifest matches = {}",
        path.display(),
        manifest.matches(&reloaded)
    );

    let (filtered, rows, cols) = preprocess_min_sum(&reloaded, 14.0)?;
    println!(
        "min-sum filter at 14.0 kept {} of {} rows and {} of {} columns ({}x{} remain)",
        rows.len(),
        reloaded.rows(),
        cols.len(),
        reloaded.cols(),
        filtered.rows(),
        filtered.cols()
    );

    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}

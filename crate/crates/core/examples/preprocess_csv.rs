//! Load a CSV, one-hot encode categoricals, normalize, and print the
//! preprocessing report as JSON.
//!
//! cargo run --example preprocess_csv -- [path.csv] [label-column] [zscore|minmax]
//!
//! Without arguments a small inline table is used.

use locl::data::{load_csv, preprocess, read_csv, NormMode};

const INLINE: &str = "\
age,colour,constant,height,label
31,red,5,1.71,yes
45,blue,5,1.62,no
27,red,5,1.80,yes
52,green,5,1.55,no
38,blue,5,1.68,yes
";

fn main() -> locl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let table = match args.first() {
        Some(path) => load_csv(path, None)?,
        None => read_csv(INLINE.as_bytes(), None)?,
    };
    let label = args.get(1).cloned().unwrap_or_else(|| table.column_names.last().cloned().unwrap_or_default());
    let mode: NormMode = args.get(2).map(|m| m.parse()).transpose()?.unwrap_or_default();

    let (d, report) = preprocess(&table, &label, mode)?;
    println!("{} rows, {} features, classes {:?}", d.n_rows(), d.n_features(), d.class_names);
    println!("features: {}", d.feature_names.join(", "));
    for i in 0..d.n_rows().min(5) {
        let row: Vec<String> = d.x.row(i).iter().map(|v| format!("{v:7.3}")).collect();
        println!("  {} -> {}", row.join(" "), d.class_names[d.labels.as_ref().unwrap()[i]]);
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

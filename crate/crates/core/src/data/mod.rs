//! MovieLens ingestion, label binarization, seeded splits and CSV export.

mod export;
mod movielens;
mod split;

pub use export::{
    export_metrics, parse_metrics_csv, parse_tokens_csv, EpochRow, MetricsLog, TokenRow,
    METRICS_HEADER, TOKENS_HEADER,
};
pub(crate) use export::write_file;
pub use movielens::{binarize, load_movielens, parse_movielens, InteractionLog, Record, Vocab};
pub use split::{split, split_sizes, Split};

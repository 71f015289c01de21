//! Exhaustive descriptor index and query ranking.

mod index;
mod rank;

pub use index::{build_index, DescriptorIndex, INDEX_MAGIC};
pub use rank::{query_rank, rank_all, read_ranked_lists, write_ranked_lists, RankedItem, RankedList};

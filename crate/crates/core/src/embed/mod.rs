//! Skip-gram embedding pre-training for acoustic units, with hierarchical
//! softmax over Huffman codes.

mod huffman;
mod skipgram;

pub use huffman::{build_huffman, HuffmanTree};
pub use skipgram::{
    export_for_cnn, load_embedding_table, pair_loss, save_embedding_table, train_skipgram,
    EmbedConfig, EmbeddingTable,
};

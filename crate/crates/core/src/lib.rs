//! Deep distributed random samplings (DDRS): an unsupervised, layer-wise
//! feature learner. Each layer is a bank of independent k-centers
//! clusterings whose centers are randomly sampled training examples; every
//! example is encoded as the one-hot index of its closest center in each
//! clustering, and the concatenated codes feed the next layer. A PCA
//! readout projects the top-layer codes to a low-dimensional embedding.
//!
//! ```no_run
//! use ddrs_core::{fit_model_detailed, load_idx_dataset, transform, ModelConfig};
//!
//! let train = load_idx_dataset("train-images-idx3-ubyte", None)?;
//! let config = ModelConfig::default_for(train.n(), 10, 42);
//! let fitted = fit_model_detailed(&train, &config)?;
//! let embedding = transform(&fitted.model, &train)?;
//! assert_eq!(embedding, fitted.embedding);
//! # Ok::<(), ddrs_core::DdrsError>(())
//! ```

pub mod bits;
pub mod dataio;
pub mod eigen;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod model;
pub mod pca;
pub mod sampling;

pub use bits::BitMatrix;
pub use dataio::{
    load_csv, load_idx_dataset, load_idx_images, load_idx_labels, load_model, normalize_bytes,
    parse_csv, read_embedding_csv, save_model, write_embedding_csv,
};
pub use encoding::{
    encode_layer, encode_through, fit_layer, fit_layers, fit_model, fit_model_detailed, one_hot,
    similarity_bottom, similarity_upper, transform, transform_features, FitOutput, LayerInput,
    LayerReport, LayerStack, Scores,
};
pub use error::{DdrsError, Result};
pub use eval::{
    evaluate_embedding, kmeans, nmi, KMeansOptions, KMeansResult, NmiSummary, Partition,
};
pub use model::{
    validate_params, Centers, ClusteringModel, Dataset, DdrsModel, Kernel, LayerModel, LayerParams,
    ModelConfig, PcaModel, SparseCode,
};
pub use pca::{fit_pca, fit_pca_codes, project, project_codes};
pub use sampling::{
    cyclic_shift, derive_stream, sample_centers, select_features, Purpose, RngStream,
};

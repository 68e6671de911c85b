//! Corpus expansion and class balancing.
//!
//! Two balancing strategies exist because oversampling is a vector-space
//! method while training data is text: [`balance_by_duplication`] pads
//! minority question types with synonym-augmented copies, and [`smote`]
//! interpolates embedding vectors for index-level balancing.

mod balance;
mod smote;
mod synonym;
mod translate;

pub use balance::{balance_by_duplication, BalanceError};
pub use smote::{majority_count, smote, smote_with, EmbeddingPoint, PointSource, SmoteError};
pub use synonym::{synonym_replace, LexiconError, SynonymLexicon, DEFAULT_SYNONYM_RATE};
pub use translate::{back_translate, Direction, IdentityTranslator, PivotDictionary, Translator, TranslatorError};

pub const DEFAULT_SMOTE_K: usize = 5;

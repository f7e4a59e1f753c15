"""LSTM language models with artefact-vector fusion, at desk scale."""

__version__ = "0.1.0"

from .bpe import Vocab, decode, encode, load_vocab, save_vocab, train_bpe
from .corpus import Corpus, SentenceBatch, batches, load_corpus
from .artefacts import (Artefact, ArtefactStore, BagOfWords, CropSpec,
                        StoreArtefacts, TfIdf, ZeroArtefacts, apply_dropout,
                        bow_artefact, crop_range, fit_idf, load_store, lookup,
                        tfidf_artefact, write_store, zero_artefact)
from .model import (FFNConfig, FFNParams, FUSION_MODES, LMConfig, LMParams,
                    StepState, ffn_forward, ffn_loss_and_grads, forward_sentence,
                    fuse_early, fuse_late, generate, init_ffn, init_lm,
                    load_checkpoint, loss_and_grads, lstm_step, param_count,
                    save_checkpoint, sentence_nll)
from .optim import AdamState, adam_step, init_adam
from .training import (MetricsRecord, TrainConfig, reverse_wean_schedule,
                       train, wean_off_schedule, wean_schedule)
from .evaluation import (EvalReport, correlate_reading_times, cross_domain,
                         pearson, perplexity, similarity_profile,
                         word_surprisals)

"""Character-sequential representation CNN for answer selection."""
from .charvocab import CharAlphabet, EncodedSentence, build_alphabet, encode
from .config import RunConfig
from .dataio import QAPair, SplitStats, compute_stats, load_canonical_tsv, load_wikiqa_tsv
from .model import ModelParams, forward_pair, backward_pair, init_model, score
from .optim import adadelta_step, grad_check, loss, train
from .rankeval import EvalReport, evaluate

__version__ = "0.1.0"

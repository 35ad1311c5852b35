"""Constants for the epistact toolkit."""

DOMAIN = "epistact"

# Activities and tags (canonical order is the wire order everywhere)
ACTIVITY_ORDER = ("HG", "EG", "EE", "DC")
BIO_TAGS = ("B", "I", "O")

# Segment-level preference for the single-label reduction, most preferred first
PREFERENCE_ORDER = ("DC", "HG", "EG", "EE")

# Known corpus domains (free strings are accepted as well)
DOMAIN_MEDICINE = "MeD"
DOMAIN_TEACHING = "TeD"

# Corpus record keys, in canonical serialization order
KEY_DOC_ID = "doc_id"
KEY_DOMAIN = "domain"
KEY_CASE_ID = "case_id"
KEY_TOKENS = "tokens"
KEY_ANNOTATIONS = "annotations"
KEY_ANNOTATOR = "annotator"
KEY_ACTIVITY = "activity"
KEY_BEGIN = "begin"
KEY_END = "end"
RECORD_KEYS = (KEY_DOC_ID, KEY_DOMAIN, KEY_CASE_ID, KEY_TOKENS, KEY_ANNOTATIONS)
ANNOTATION_KEYS = (KEY_ANNOTATOR, KEY_ACTIVITY, KEY_BEGIN, KEY_END)

# Split names
SPLIT_TRAIN = "train"
SPLIT_DEV = "dev"
SPLIT_TEST = "test"
SPLIT_NAMES = (SPLIT_TRAIN, SPLIT_DEV, SPLIT_TEST)

# Sequence repair policies
POLICY_STRICT = "strict"
POLICY_IOB_REPAIR = "iob-repair"

# Strategies
STRATEGY_SEPARATE = "separate"
STRATEGY_CONCAT = "concat"
STRATEGY_MULTIOUTPUT = "multioutput"
STRATEGY_PREF = "pref"
STRATEGY_MAJ = "maj"

# Alpha modes
ALPHA_OVERALL = "overall"
ALPHA_SEGMENT = "segment"
SEGMENT_CATEGORY = "SEG"

# Model selection metrics
SELECT_HL = "hl"
SELECT_MA = "m_a"

# Report formats
FORMAT_TEXT = "text"
FORMAT_CSV = "csv"
FORMAT_JSONL = "json-lines"
FORMAT_CONLL = "conll"

# Configuration Keys
CONF_COMMAND = "command"
CONF_INPUT = "input"
CONF_OUTPUT = "output"
CONF_GOLD = "gold"
CONF_PRED = "pred"
CONF_MODEL = "model"
CONF_SEED = "seed"
CONF_STRATEGY = "strategy"
CONF_RATIOS = "ratios"
CONF_THRESHOLD = "threshold"
CONF_ANNOTATORS = "annotators"
CONF_ALPHA = "alpha"
CONF_COMPARISONS = "comparisons"
CONF_FORMAT = "format"
CONF_EPOCHS = "epochs"
CONF_RUNS = "runs"
CONF_WORKERS = "workers"
CONF_SELECT = "select"
CONF_IMAGE = "image"
CONF_SCORES_A = "scores_a"
CONF_SCORES_B = "scores_b"
CONF_VERBOSE = "verbose"
CONF_DEV = "dev"
CONF_SPLIT = "split"
CONF_METRIC = "metric"
CONF_UNDECIDED = "undecided"
CONF_RESOLVED = "resolved"
CONF_LABELS = "labels"

# Defaults
DEFAULT_SEED = 13
DEFAULT_RATIOS = (0.6, 0.2, 0.2)
DEFAULT_THRESHOLD = 4
DEFAULT_ANNOTATORS = 5
DEFAULT_ALPHA = 0.05
DEFAULT_COMPARISONS = 1
DEFAULT_FORMAT = FORMAT_TEXT
DEFAULT_STRATEGY = STRATEGY_CONCAT
DEFAULT_EPOCHS = 25
DEFAULT_RUNS = 10
DEFAULT_WORKERS = 1
DEFAULT_SELECT = SELECT_HL
DEFAULT_METRIC = "m_a"

# Environment
ENV_SEED = "EPISTACT_SEED"

# Exact Mann-Whitney enumeration limit (n + m)
EXACT_MWU_LIMIT = 20

# Tolerances
RATIO_TOLERANCE = 1e-9

# Model container
MODEL_FORMAT = "epistact-perceptron"
MODEL_VERSION = 1

# Feature extraction
FEATURE_WINDOW = 2
PAD_LEFT = "<s>"
PAD_RIGHT = "</s>"
SENTENCE_END_TOKENS = (".", "!", "?")

# CLI subcommands
COMMANDS = (
    "validate",
    "stats",
    "split",
    "agreement",
    "gold",
    "transform",
    "train",
    "predict",
    "evaluate",
    "confusion",
    "significance",
    "experiment",
    "upper-bound",
)
REPORT_FORMATS = (FORMAT_TEXT, FORMAT_CSV, FORMAT_JSONL)

# Flat metric names of an evaluation record
METRIC_NAMES = (
    ("hl",)
    + tuple(f"m_s_{a}" for a in ACTIVITY_ORDER)
    + ("m_a",)
    + tuple(f"m_o_{a}" for a in ACTIVITY_ORDER)
)

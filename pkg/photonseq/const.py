"""Constants for the photonseq compiler."""

DOMAIN = "photonseq"

# hardware section
CONF_T_EMIT = "t_emit_ns"
CONF_T_1Q = "t_1q_ns"
CONF_T_CZ = "t_cz_ns"
CONF_T_MEAS = "t_meas_ns"
CONF_T2 = "t2_ns"
CONF_SIGMA_CZ = "sigma_cz"
CONF_LOSS = "loss_db_per_km"

DEFAULT_T_EMIT = 0.1
DEFAULT_T_1Q = 0.1
DEFAULT_T_CZ = 10.0
DEFAULT_T_MEAS = 0.0
DEFAULT_T2 = 4400.0
DEFAULT_SIGMA_CZ = 0.99
DEFAULT_LOSS = 0.2

# hyperparameters section
CONF_EPISODES = "episodes"
CONF_CAPACITY = "capacity"
CONF_BATCH_SIZE = "batch_size"
CONF_TARGET_SYNC = "target_sync"
CONF_EPSILON0 = "epsilon0"
CONF_EPSILON_DECAY = "epsilon_decay"
CONF_EPSILON_FLOOR = "epsilon_floor"
CONF_GAMMA = "gamma"
CONF_ALPHA = "alpha"
CONF_STEP_SIZE = "step_size"
CONF_RECEPTIVE_FRACTION = "receptive_fraction"
CONF_SEED = "seed"
CONF_HIDDEN = "hidden"
CONF_MAX_GRAD_NORM = "max_grad_norm"

DEFAULT_EPISODES = 300
DEFAULT_CAPACITY = 10000
DEFAULT_BATCH_SIZE = 256
DEFAULT_TARGET_SYNC = 500
DEFAULT_EPSILON0 = 1.0
DEFAULT_EPSILON_DECAY = 0.99
DEFAULT_EPSILON_FLOOR = 0.05
DEFAULT_GAMMA = 0.99
DEFAULT_ALPHA = 0.5
DEFAULT_STEP_SIZE = 1e-3
DEFAULT_RECEPTIVE_FRACTION = 0.5
DEFAULT_SEED = 0
DEFAULT_HIDDEN = 128

# graph sections
CONF_KIND = "kind"
CONF_N = "n"
CONF_ROWS = "rows"
CONF_COLS = "cols"
CONF_DEGREE = "degree"
CONF_P = "p"
CONF_EDGES = "edges"
CONF_FILE = "file"

SECTION_HARDWARE = "hardware"
SECTION_HYPERPARAMETERS = "hyperparameters"
SECTION_GRAPH = "graph"

KIND_PATH = "path"
KIND_STAR = "star"
KIND_CYCLE = "cycle"
KIND_GRID = "grid"
KIND_RANDOM_REGULAR = "random_regular"
KIND_ERDOS_RENYI = "erdos_renyi"
KIND_RANDOM_TREE = "random_tree"
KIND_GNM = "gnm"

GRAPH_KINDS = [
    KIND_PATH,
    KIND_STAR,
    KIND_CYCLE,
    KIND_GRID,
    KIND_RANDOM_REGULAR,
    KIND_ERDOS_RENYI,
    KIND_RANDOM_TREE,
    KIND_GNM,
]

POLICY_RL = "rl"
POLICY_RANDOM = "random"
POLICY_GREEDY = "greedy"
POLICY_EXHAUSTIVE = "exhaustive"
POLICY_BEST_OF_RANDOM = "best_of_random"

POLICIES = [
    POLICY_RL,
    POLICY_RANDOM,
    POLICY_GREEDY,
    POLICY_EXHAUSTIVE,
    POLICY_BEST_OF_RANDOM,
]

# verification
DEFAULT_QUBIT_CAP = 14
DEFAULT_VERIFY_SEEDS = 10
FIDELITY_TOLERANCE = 1e-9
EXHAUSTIVE_MEASUREMENT_LIMIT = 4

# exhaustive search
DEFAULT_NODE_BUDGET = 200000

STAND_IN_NOTE = "synthetic stand-in"
NOT_APPLICABLE = "n/a"

REPORT_COLUMNS = [
    "graph",
    "V",
    "E",
    "policy",
    "T_gen_ns",
    "N_e",
    "N_CZ",
    "F_de",
    "F_CZ",
    "P_remain",
    "total_reward",
    "verified",
    "wall_ms",
    "note",
    "timestamp",
]

REDUCTION_COLUMNS = [
    "graph",
    "size",
    "policy",
    "reference",
    "T_gen_reduction",
    "N_e_reduction",
    "N_CZ_reduction",
]

TRAINING_LOG_COLUMNS = [
    "episode",
    "epsilon",
    "total_reward",
    "mean_loss",
    "buffer_size",
    "steps",
    "N_e",
    "N_CZ",
]

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INTERNAL = 2

"""Progressive neural architecture search with a learned recurrent
surrogate, temperature-annealed sampling and weight-sharing-aware
evaluation.
"""

from .engine import (
    EvalRecord,
    History,
    SearchConfig,
    SearchResult,
    report,
    run_baseline_onepass,
    run_search,
)
from .evaluators import EvaluatorConfig, MaturityStore, base_quality, evaluate
from .sampler import TemperatureSchedule, base_probabilities, sample_k, temper
from .space import (
    ArchDescriptor,
    Block,
    InvalidArchitecture,
    MacroArch,
    MacroLayer,
    MicroCell,
    Op,
    Space,
    cardinality,
    cell_output_blocks,
    decode,
    encode,
    enumerate_level,
    export_dot,
    extend,
    from_json_dict,
    to_json_dict,
)
from .surrogate import AdamState, SurrogateModel, forward, init, train

__version__ = "0.1.0"

__all__ = [
    "ArchDescriptor",
    "AdamState",
    "Block",
    "EvalRecord",
    "EvaluatorConfig",
    "History",
    "InvalidArchitecture",
    "MacroArch",
    "MacroLayer",
    "MaturityStore",
    "MicroCell",
    "Op",
    "SearchConfig",
    "SearchResult",
    "Space",
    "SurrogateModel",
    "TemperatureSchedule",
    "base_probabilities",
    "base_quality",
    "cardinality",
    "cell_output_blocks",
    "decode",
    "encode",
    "enumerate_level",
    "evaluate",
    "export_dot",
    "extend",
    "forward",
    "from_json_dict",
    "init",
    "report",
    "run_baseline_onepass",
    "run_search",
    "sample_k",
    "temper",
    "to_json_dict",
    "train",
    "__version__",
]

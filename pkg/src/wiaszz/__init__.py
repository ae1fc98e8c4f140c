"""Work-item aware identification of bug-inducing commits."""
from .gitrepo import (
    BlameAttribution,
    CommitMeta,
    FileDiff,
    GitError,
    Repository,
    blame_lines,
    diff_commit,
    open_repository,
    walk_history,
)
from .methods import MethodChangeSet, MethodRef, TestPathPolicy, is_test_path, modified_methods
from .szz import (
    CandidateSet,
    FilterConfig,
    apply_issue_filter,
    apply_one_commit_filter,
    bszz_candidates,
    select_largest,
    select_latest,
)
from .wia import BicPrediction, WiaConfig, predict_bic, run_dataset
from .workitems import (
    Factor,
    TrackingMatrix,
    WorkItemSet,
    build_tracking_matrix,
    detect_work_items,
    is_work_item,
    select_bic_candidate,
)
from .evaluation import FixRecord, MetricsSummary, factor_sweep, load_dataset, score, simulate_issue_date

__version__ = "0.1.0"

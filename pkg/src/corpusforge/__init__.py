"""corpusforge: manifest-driven construction and evaluation of multi-genre
speaker corpora from pre-extracted embeddings."""

from .cleanse import CleanseDecision, cleanse_cluster, cohesion_score, fuse_scores
from .cluster import ClusterParams, SpeakerCluster, cluster_playlist, dbscan
from .combine import MergeParams, SpeakerIdentity, find_merge_candidates, merge_speakers
from .config import PipelineConfig, load_config
from .embedding import (
    EmbeddingTable,
    aggregate_frame_embeddings,
    centroid,
    cosine_similarity,
    read_embeddings,
    write_embeddings,
)
from .evalkit import (
    EerResult,
    SplitSpec,
    TrialPair,
    compute_eer,
    eer_from_scores,
    generate_easy_trials,
    generate_hard_trials,
    genre_eer_matrix,
    score_trials,
    split_speakers,
)
from .genre import CorpusStats, GenreProbs, assign_genres, corpus_stats
from .manifest import (
    QualityPolicy,
    SegmentRecord,
    UtteranceRecord,
    VideoRecord,
    apply_segmentation,
    filter_videos,
    load_manifest,
    write_manifest,
)
from .pipeline import run_pipeline, run_stage

__version__ = "0.1.0"

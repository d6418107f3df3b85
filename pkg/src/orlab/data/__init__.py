from .dataset import (Batch, DatasetFormatError, DatasetIntegrityError, Manifest, OfflineDataset,
                      ReplayBuffer, load, sample_batch, save)
from .protocols import (EPS_SWEEP, GeneratorDescriptor, collect, distshift_experts, empty_expert,
                        generate, make_eps_greedy_dataset, make_multimodal_dataset,
                        make_pointmaze_dataset, make_random_lava_dataset)

__all__ = ["Batch", "DatasetFormatError", "DatasetIntegrityError", "Manifest", "OfflineDataset",
           "ReplayBuffer", "load", "sample_batch", "save", "EPS_SWEEP", "GeneratorDescriptor",
           "collect", "distshift_experts", "empty_expert", "generate", "make_eps_greedy_dataset",
           "make_multimodal_dataset", "make_pointmaze_dataset", "make_random_lava_dataset"]

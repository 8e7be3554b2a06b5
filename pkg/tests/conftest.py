import torch

# Single-threaded keeps CPU runs deterministic and avoids oversubscription.
torch.set_num_threads(1)

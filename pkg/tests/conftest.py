import torch

# serial contract mode: all determinism guarantees assume one compute thread
torch.set_num_threads(1)

"""Finite-difference gradient checks for small torch modules."""
import torch
import torch.nn as nn

import oracles
from sodistill.dedecoder import DynamicUpsample, FeaturePyramid


def _flat(out):
    if hasattr(out, "edge_logits"):
        return torch.cat([out.f_e.flatten(), out.edge_logits.flatten()])
    return out.flatten()


def check_module(module, inputs, n_entries=40, n_param_entries=8):
    """Worst relative error of autograd against central differences, over
    sampled entries of every input and every parameter, in float64."""
    module = module.double()
    inputs = [t.double().requires_grad_(True) for t in inputs]
    probe = None

    def scalar():
        nonlocal probe
        out = _flat(module(*inputs))
        if probe is None:
            probe = torch.randn(out.shape, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
        return (out * probe).sum()

    module.zero_grad()
    scalar().backward()
    targets = [(t, n_entries) for t in inputs] + [(p, n_param_entries) for p in module.parameters()]
    worst = 0.0
    for t, n in targets:
        arr = t.detach().numpy().copy()

        def f(a, t=t):
            with torch.no_grad():
                t.copy_(torch.from_numpy(a))
                return scalar().item()

        worst = max(worst, oracles.grad_check(f, arr, t.grad.numpy(), max_entries=n))
        with torch.no_grad():
            t.copy_(torch.from_numpy(arr))
    return worst


class BranchWrap(nn.Module):
    def __init__(self, branch, out_size):
        super().__init__()
        self.branch = branch
        self.out_size = out_size

    def forward(self, f1, f2, f3):
        return self.branch(FeaturePyramid(f1, f2, f3), self.out_size)


class FakeEdge:
    def __init__(self, f_e):
        self.f_e = f_e


class HeadWrap(nn.Module):
    def __init__(self, head):
        super().__init__()
        self.head = head

    def forward(self, f3, f_e):
        return self.head(FeaturePyramid(None, None, f3), FakeEdge(f_e))


def perturb_offsets(module, std=0.3):
    for m in module.modules():
        if isinstance(m, DynamicUpsample):
            nn.init.normal_(m.offset.weight, std=std)


def tiny_pyramid(batch=2, c=8, n=4):
    return FeaturePyramid(torch.randn(batch, c, n // 4, n // 4), torch.randn(batch, c, n // 2, n // 2),
                          torch.randn(batch, c, n, n))

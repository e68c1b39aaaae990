"""Writes tiny_normals.ts, a TorchScript stand-in for a pretrained normal
estimator. Its raw output is deliberately not unit length and points away
from the viewer, so callers must re-normalise and flip z."""
import pathlib

import torch


class TinyNormals(torch.nn.Module):
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        nx = 2.0 * (x[:, 0:1] - 0.5)
        ny = 2.0 * (x[:, 1:2] - 0.5)
        nz = -(0.5 + x[:, 2:3])
        return torch.cat([nx, ny, nz], dim=1)


if __name__ == "__main__":
    out = pathlib.Path(__file__).with_name("tiny_normals.ts")
    torch.jit.script(TinyNormals()).save(str(out))
    print(out)

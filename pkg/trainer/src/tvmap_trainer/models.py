"""Torch definitions of the two inference architectures.

Layer names and tensor shapes mirror the TVMW manifests one-to-one:
conv1..conv4/bn1..bn4/fc1..fc3 for the 32x32 parameter regressor,
conv1..conv3/bn1..bn3/fc1..fc2 for the 64x64 noise classifier. The
classifier's logits are ordered (poisson, gaussian), matching the
delta = 0/1 convention of the inference side.
"""

from __future__ import annotations

import torch
from torch import nn

MU_MIN = 0.01
MU_MAX = 240.0

REGRESSOR_TAG = "regressor_v1"
CLASSIFIER_TAG = "classifier_v1"


class MuRegressor(nn.Module):
    """32x32 patch -> scalar regularisation parameter."""

    def __init__(self, dropout: float = 0.25):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 64, 5, padding=2)
        self.bn1 = nn.BatchNorm2d(64)
        self.conv2 = nn.Conv2d(64, 128, 5, padding=2)
        self.bn2 = nn.BatchNorm2d(128)
        self.conv3 = nn.Conv2d(128, 256, 3, padding=1)
        self.bn3 = nn.BatchNorm2d(256)
        self.conv4 = nn.Conv2d(256, 512, 3, padding=1)
        self.bn4 = nn.BatchNorm2d(512)
        self.pool = nn.MaxPool2d(2)
        self.fc1 = nn.Linear(2048, 512)
        self.fc2 = nn.Linear(512, 128)
        self.fc3 = nn.Linear(128, 1)
        self.dropout = nn.Dropout(dropout)
        self.relu = nn.ReLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv, bn in ((self.conv1, self.bn1), (self.conv2, self.bn2),
                         (self.conv3, self.bn3), (self.conv4, self.bn4)):
            x = self.pool(self.relu(bn(conv(x))))
        x = torch.flatten(x, 1)
        x = self.dropout(self.relu(self.fc1(x)))
        x = self.dropout(self.relu(self.fc2(x)))
        return self.fc3(x).squeeze(1)

    @torch.no_grad()
    def predict(self, x: torch.Tensor) -> torch.Tensor:
        """Inference-mode output with the deployment clamp applied."""
        was_training = self.training
        self.eval()
        try:
            return self.forward(x).clamp(MU_MIN, MU_MAX)
        finally:
            self.train(was_training)


class NoiseClassifier(nn.Module):
    """64x64 patch -> (poisson, gaussian) logits."""

    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 32, 5, padding=2)
        self.bn1 = nn.BatchNorm2d(32)
        self.conv2 = nn.Conv2d(32, 64, 5, padding=2)
        self.bn2 = nn.BatchNorm2d(64)
        self.conv3 = nn.Conv2d(64, 128, 3, padding=1)
        self.bn3 = nn.BatchNorm2d(128)
        self.pool = nn.MaxPool2d(2)
        self.fc1 = nn.Linear(8192, 2048)
        self.fc2 = nn.Linear(2048, 2)
        self.relu = nn.ReLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv, bn in ((self.conv1, self.bn1), (self.conv2, self.bn2), (self.conv3, self.bn3)):
            x = self.pool(self.relu(bn(conv(x))))
        x = torch.flatten(x, 1)
        return self.fc2(self.relu(self.fc1(x)))

    @torch.no_grad()
    def predict_proba(self, x: torch.Tensor) -> torch.Tensor:
        was_training = self.training
        self.eval()
        try:
            return torch.softmax(self.forward(x), dim=1)
        finally:
            self.train(was_training)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def build_model(tag: str) -> nn.Module:
    if tag == REGRESSOR_TAG:
        return MuRegressor()
    if tag == CLASSIFIER_TAG:
        return NoiseClassifier()
    raise ValueError(f"unknown architecture tag {tag!r}")

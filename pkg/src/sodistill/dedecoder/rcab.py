import torch
import torch.nn as nn


class ChannelAttention(nn.Module):
    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.squeeze = nn.Conv2d(channels, channels // reduction, 1)
        self.excite = nn.Conv2d(channels // reduction, channels, 1)

    def gate(self, x):
        return torch.sigmoid(self.excite(torch.relu(self.squeeze(self.pool(x)))))

    def forward(self, x):
        return x * self.gate(x)


class RCAB(nn.Module):
    """Residual channel attention block: ``x + ca(conv(relu(conv(x))))``."""

    def __init__(self, channels: int, reduction: int = 16, zero_init: bool = False):
        super().__init__()
        if channels < reduction:
            raise ValueError(f"channels ({channels}) must be >= reduction ({reduction})")
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.ca = ChannelAttention(channels, reduction)
        if zero_init:
            nn.init.zeros_(self.conv2.weight)
            nn.init.zeros_(self.conv2.bias)

    def forward(self, x):
        return x + self.ca(self.conv2(torch.relu(self.conv1(x))))

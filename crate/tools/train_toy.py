"""Trains the shipped toy models on the 8x8 digits set and writes them as
Q8.8 JSON model files plus a held-out labeled dataset.

Run once from the repository root:  python3 tools/train_toy.py
The outputs in models/ are committed; the Rust code never calls this.
"""
import json

import numpy as np
import torch
from sklearn.datasets import load_digits
from sklearn.model_selection import train_test_split

BITS, FRAC = 16, 8
SCALE = 1 << FRAC
LO, HI = -(1 << (BITS - 1)), (1 << (BITS - 1)) - 1


def q(a):
    return np.clip(np.round(np.asarray(a, dtype=np.float64) * SCALE), LO, HI).astype(int).tolist()


def fc(layer):
    w = layer.weight.detach().numpy()
    return {"type": "fc", "rows": w.shape[0], "cols": w.shape[1], "weights": q(w.reshape(-1)),
            "bias": q(layer.bias.detach().numpy())}


def train(model, x, y, epochs, lr, sparse_layers=(), l1=0.0):
    """Adam on cross-entropy, plus an L1 penalty on the outputs of the
    given (ReLU) module indices to push deeper activations toward zero."""
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = torch.nn.CrossEntropyLoss()
    acts = []
    for i in sparse_layers:
        model[i].register_forward_hook(lambda _m, _i, out: acts.append(out))
    for _ in range(epochs):
        perm = torch.randperm(len(x))
        for i in range(0, len(x), 32):
            idx = perm[i:i + 32]
            opt.zero_grad()
            acts.clear()
            loss = loss_fn(model(x[idx]), y[idx])
            loss = loss + l1 * sum(a.abs().mean() for a in acts)
            loss.backward()
            opt.step()
    acts.clear()


def main():
    torch.manual_seed(7)
    digits = load_digits()
    x_tr, x_te, y_tr, y_te = train_test_split(digits.data / 16.0, digits.target, test_size=300,
                                              random_state=7, stratify=digits.target)
    # standardize per pixel so the input layer sees dense data
    mean, std = x_tr.mean(0), x_tr.std(0)
    std[std == 0] = 1.0
    x_tr, x_te = (x_tr - mean) / std, (x_te - mean) / std
    xt = torch.tensor(x_tr, dtype=torch.float32)
    yt = torch.tensor(y_tr, dtype=torch.long)

    mlp = torch.nn.Sequential(torch.nn.Linear(64, 48), torch.nn.ReLU(), torch.nn.Linear(48, 32),
                              torch.nn.ReLU(), torch.nn.Linear(32, 10))
    train(mlp, xt, yt, epochs=60, lr=2e-3, sparse_layers=(3,), l1=0.05)

    cnn_conv = torch.nn.Conv2d(1, 4, 3, padding=1)
    cnn_fc = torch.nn.Linear(4 * 8 * 8, 10)
    cnn = torch.nn.Sequential(torch.nn.Unflatten(1, (1, 8, 8)), cnn_conv, torch.nn.ReLU(),
                              torch.nn.Flatten(), cnn_fc)
    train(cnn, xt, yt, epochs=40, lr=2e-3)

    fmt = {"bits": BITS, "frac": FRAC}
    mlp_json = {"format": fmt, "layers": [fc(mlp[0]), {"type": "relu"}, fc(mlp[2]), {"type": "relu"}, fc(mlp[4])]}
    k = cnn_conv.weight.detach().numpy()
    cnn_json = {"format": fmt, "input_shape": [1, 8, 8], "layers": [
        {"type": "conv2d", "out_channels": 4, "in_channels": 1, "kernel_h": 3, "kernel_w": 3, "stride": 1,
         "padding": 1, "weights": q(k.reshape(-1)), "bias": q(cnn_conv.bias.detach().numpy())},
        {"type": "relu"}, {"type": "flatten"}, fc(cnn_fc)]}
    single = {"format": fmt, "layers": [dict(fc(mlp[0]), bias=None)]}
    dataset = [{"input": q(xi), "label": int(yi)} for xi, yi in zip(x_te, y_te)]

    for name, obj in [("toy_mlp", mlp_json), ("toy_cnn", cnn_json), ("single_fc", single),
                      ("digits_test", dataset)]:
        with open(f"models/{name}.json", "w") as f:
            json.dump(obj, f, separators=(",", ":"))
            f.write("\n")
    with open("models/sample_input.json", "w") as f:
        json.dump(dataset[0]["input"], f, separators=(",", ":"))
        f.write("\n")

    with torch.no_grad():
        xe = torch.tensor(x_te, dtype=torch.float32)
        for name, m in [("mlp", mlp), ("cnn", cnn)]:
            acc = (m(xe).argmax(1).numpy() == y_te).mean()
            print(f"{name}: float test accuracy {acc:.4f}")


if __name__ == "__main__":
    main()

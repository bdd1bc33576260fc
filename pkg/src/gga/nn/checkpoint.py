"""Model serialization on top of the shared artifact container."""

from .. import container
from .layers import layer_from_dict, layer_to_dict
from .model import Model


def save_model(path, model, extra_meta=None):
    meta = {
        "layers": [layer_to_dict(l) for l in model.layers],
        "input_shape": list(model.input_shape),
    }
    if extra_meta:
        meta["extra"] = dict(extra_meta)
    arrays = []
    for i, (params, state) in enumerate(zip(model.params, model.state)):
        for name, value in sorted(params.items()):
            arrays.append((f"p{i}.{name}", value))
        for name, value in sorted(state.items()):
            arrays.append((f"s{i}.{name}", value))
    container.write(path, "model", meta, arrays)


def load_model(path):
    _, meta, arrays = container.read(path, expect_kind="model")
    layers = [layer_from_dict(d) for d in meta["layers"]]
    params = [{} for _ in layers]
    state = [{} for _ in layers]
    for key, value in arrays.items():
        slot, name = key.split(".", 1)
        index = int(slot[1:])
        (params if slot[0] == "p" else state)[index][name] = value
    return Model(layers, meta["input_shape"], params, state)

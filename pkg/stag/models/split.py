from pydantic import BaseModel, model_validator


class Split(BaseModel):
    train: list[int]
    val: list[int]
    test: list[int]
    n_nodes: int

    @model_validator(mode="after")
    def _disjoint(self):
        parts = {"train": self.train, "val": self.val, "test": self.test}
        for name, idx in parts.items():
            if len(set(idx)) != len(idx):
                raise ValueError(f"{name} split repeats node indices")
            bad = [i for i in idx if not 0 <= i < self.n_nodes]
            if bad:
                raise ValueError(f"{name} split has indices outside [0, {self.n_nodes}): {bad[:5]}")
        seen: set[int] = set()
        for name, idx in parts.items():
            overlap = seen.intersection(idx)
            if overlap:
                raise ValueError(f"{name} split overlaps an earlier split at {sorted(overlap)[:5]}")
            seen.update(idx)
        return self

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)

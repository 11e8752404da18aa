from typing import Optional

from pydantic import BaseModel


class EpochRecord(BaseModel):
    run: int
    epoch: int
    train_loss: float
    val_metric: float


class RunResult(BaseModel):
    run: int
    seed: int
    epochs_run: int
    best_epoch: int
    best_val: float
    test_metric: float
    seconds: float
    history: list[EpochRecord] = []

    def summary_row(self, **extra) -> dict:
        row = {"run": self.run, "seed": self.seed, "epochs_run": self.epochs_run, "best_epoch": self.best_epoch,
               "best_val": self.best_val, "test_metric": self.test_metric, "seconds": round(self.seconds, 3)}
        row.update(extra)
        return row


class Summary(BaseModel):
    label: str
    runs: int
    mean: float
    std: float
    metric: str = "accuracy"
    note: Optional[str] = None

    def __str__(self) -> str:
        if self.metric == "accuracy":
            return f"{self.label}: {100 * self.mean:.2f} ± {100 * self.std:.2f} over {self.runs} runs"
        return f"{self.label}: {self.mean:.4f} ± {self.std:.4f} {self.metric} over {self.runs} runs"

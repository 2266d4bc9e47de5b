"""
Modelos para relatórios de avaliação e decomposição das perdas
"""

from typing import Dict

from pydantic import BaseModel, Field


def f1_score(precision: float, recall: float) -> float:
    if precision + recall <= 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


class CategoryScore(BaseModel):
    """Contagens e F1 de uma categoria (CULane) ou de um conjunto de quadros"""

    tp: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    fn: int = Field(0, ge=0)
    precision: float = Field(0.0, ge=0.0, le=1.0)
    recall: float = Field(0.0, ge=0.0, le=1.0)
    f1: float = Field(0.0, ge=0.0, le=1.0)

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "CategoryScore":
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        return cls(
            tp=tp, fp=fp, fn=fn,
            precision=precision, recall=recall, f1=f1_score(precision, recall),
        )


class EvalReport(BaseModel):
    """Métricas TuSimple (accuracy/FP/FN) e CULane (precision/recall/F1)"""

    benchmark: str = Field("tusimple", description="tusimple ou culane")
    accuracy: float = Field(0.0, ge=0.0, le=1.0)
    fp_rate: float = Field(0.0, ge=0.0, le=1.0)
    fn_rate: float = Field(0.0, ge=0.0, le=1.0)
    precision: float = Field(0.0, ge=0.0, le=1.0)
    recall: float = Field(0.0, ge=0.0, le=1.0)
    f1: float = Field(0.0, ge=0.0, le=1.0)
    tp: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    fn: int = Field(0, ge=0)
    n_pred: int = Field(0, ge=0, description="Faixas preditas")
    n_gt: int = Field(0, ge=0, description="Faixas de ground truth")
    correct_points: int = Field(0, ge=0)
    gt_points: int = Field(0, ge=0)
    n_frames: int = Field(0, ge=0)
    skipped_lanes: int = Field(0, ge=0, description="Faixas com < 2 pontos ignoradas")
    categories: Dict[str, CategoryScore] = Field(default_factory=dict)

    def headline(self) -> str:
        if self.benchmark == "culane":
            return f"F1 {self.f1 * 100:.1f} (P {self.precision:.4f}, R {self.recall:.4f})"
        return f"Accuracy {self.accuracy * 100:.2f}% FP {self.fp_rate:.4f} FN {self.fn_rate:.4f}"


class LossBreakdown(BaseModel):
    """Termos de perda somados sobre todos os módulos ativos"""

    exist: float = Field(0.0, ge=0.0)
    non_exist: float = Field(0.0, ge=0.0)
    offset: float = Field(0.0, ge=0.0)
    feature: float = Field(0.0, ge=0.0)
    distillation: float = Field(0.0, ge=0.0)
    total: float = Field(0.0, ge=0.0)

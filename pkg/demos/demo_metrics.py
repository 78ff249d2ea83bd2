# Confusion-matrix metrics on a tiny hand example, then on a facade.
import numpy as np

from facade_revise import lafr, metrics, synth

# Four pixels, two classes. Ground truth rows, predictions columns.
gt = np.array([[0, 0], [1, 1]])
pred = np.array([[0, 1], [1, 1]])
cm = metrics.confusion_matrix(gt, pred, 2)
print(cm.counts)
print("Acc", metrics.accuracy(cm))                   # 3 of 4 pixels right
print("Class_avg", metrics.class_average(cm))        # (1/1 + 2/3) / 2
print("IoU per class", metrics.iou_per_class(cm))    # 1/2 and 2/3
print("F1 of class 1", metrics.precision_recall_f1(cm, 1)[2])

# Classes that never occur are left out of the averages rather than
# counted as zero
cm3 = metrics.confusion_matrix(gt, pred, 3)
print("IoU with an unused class:", metrics.iou_per_class(cm3), "mIoU", metrics.miou(cm3))

# Matrices add, so a dataset is scored by accumulating per-image counts
total_before = metrics.ConfusionMatrix(synth.NUM_CLASSES)
total_after = metrics.ConfusionMatrix(synth.NUM_CLASSES)
for seed in range(5):
    img, g = synth.generate(seed=seed)
    p = synth.corrupt(g, synth.CorruptionParams(seed=seed))
    total_before.accumulate(g, p)
    total_after.accumulate(g, lafr.run_lafr(img, p).revised)

for name, c in (("before", total_before), ("after", total_after)):
    rep = metrics.report(c, synth.FACADE_CLASSES)
    win = rep.per_class[synth.WINDOW]["iou"]
    print(f"{name:>6}  Acc {100 * rep.acc:.2f}  mIoU {100 * rep.miou:.2f}  window IoU {100 * win:.2f}")

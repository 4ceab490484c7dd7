"""Independent scalar reference for the frozen values used in the C++ tests.

Written without reference to the C++ implementation: plain floats, corner
coordinates, and finite-difference descent for the regression reachability
checks. Run with `python3 tests/oracle/scalar_oracle.py`.
"""
import math
import random


def corners(b):
    cx, cy, w, h = b
    return cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2


def metrics(p, g, gamma=0.5):
    px1, py1, px2, py2 = corners(p)
    gx1, gy1, gx2, gy2 = corners(g)
    iw = max(0.0, min(px2, gx2) - max(px1, gx1))
    ih = max(0.0, min(py2, gy2) - max(py1, gy1))
    inter = iw * ih
    union = p[2] * p[3] + g[2] * g[3] - inter
    iou = inter / union
    cw = max(px2, gx2) - min(px1, gx1)
    ch = max(py2, gy2) - min(py1, gy1)
    c2 = cw * cw + ch * ch
    rho2 = (p[0] - g[0]) ** 2 + (p[1] - g[1]) ** 2
    v = 4 / math.pi ** 2 * (math.atan(g[2] / g[3]) - math.atan(p[2] / p[3])) ** 2
    den = (1 - iou) + v
    alpha = 0.0 if den == 0 else v / den
    ciou = iou - rho2 / c2 - alpha * v
    fec = (1 - iou) ** gamma * ciou
    return dict(iou=iou, rho2=rho2, c2=c2, v=v, alpha=alpha, ciou=ciou,
                feciou=fec, focal_loss=(1 - iou) ** gamma * (1 - ciou))


def pixel_iou(a, b):
    # a, b as integer corner tuples (x1, y1, x2, y2); count unit cells.
    ca = {(x, y) for x in range(a[0], a[2]) for y in range(a[1], a[3])}
    cb = {(x, y) for x in range(b[0], b[2]) for y in range(b[1], b[3])}
    return len(ca & cb) / len(ca | cb)


def ap_bruteforce(labels, num_gt):
    tp = fp = 0
    pts = []
    for l in labels:
        tp += l
        fp += 1 - l
        pts.append((tp / num_gt, tp / (tp + fp)))
    ap = 0.0
    prev_r = 0.0
    for r, _ in pts:
        if r > prev_r:
            best = max(p for rr, p in pts if rr >= r)
            ap += (r - prev_r) * best
            prev_r = r
    return ap


def ciou_loss(p, g):
    return 1 - metrics(p, g)["ciou"]


def focal_loss(p, g, gamma=0.5):
    return metrics(p, g, gamma)["focal_loss"]


def fd_descent(init, gt, loss, lr=0.01, mom=0.937, steps=2000, stop=0.99):
    x = list(init)
    vel = [0.0] * 4
    for k in range(steps + 1):
        if metrics(x, gt)["iou"] >= stop:
            return k, metrics(x, gt)["iou"]
        if k == steps:
            break
        grad = []
        for i in range(4):
            hi = list(x); lo = list(x)
            hi[i] += 1e-6; lo[i] -= 1e-6
            grad.append((loss(hi, gt) - loss(lo, gt)) / 2e-6)
        n = math.sqrt(sum(c * c for c in grad))
        if n > 10:
            grad = [c * 10 / n for c in grad]
        vel = [mom * v - lr * c for v, c in zip(vel, grad)]
        x = [a + b for a, b in zip(x, vel)]
        x[2] = max(x[2], 1e-3); x[3] = max(x[3], 1e-3)
    return steps, metrics(x, gt)["iou"]


if __name__ == "__main__":
    m = metrics((1, 1, 2, 2), (2, 1, 2, 2), 0.5)
    print("worked pair:", m)
    print("10/39 =", 10 / 39, " sqrt(2/3)*10/39 =", math.sqrt(2 / 3) * 10 / 39)
    print("pixel iou A vs B:", pixel_iou((0, 0, 2, 2), (1, 0, 3, 2)))
    print("AP [TP,FP,TP] gt=2:", ap_bruteforce([1, 0, 1], 2), 5 / 6)
    k, iou = fd_descent((0, 0, 1, 1), (3, 0, 1, 1), ciou_loss)
    print("unit squares at distance 3, CIoU:", k, iou)
    k, iou = fd_descent((0, 0, 1, 1), (3, 0, 1, 1), focal_loss)
    print("unit squares at distance 3, focal:", k, iou)

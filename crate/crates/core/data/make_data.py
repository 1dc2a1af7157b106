import numpy as np
def src(n):
    x = getattr(data, n)()
    return x[0] if isinstance(x, tuple) else x
from skimage import data, color, transform, util
def gray(img):
    img = np.asarray(img)
    if img.ndim == 3:
        if img.shape[2] == 4: img = img[..., :3]
        img = color.rgb2gray(img)
    return util.img_as_float(img)
def fit(img, side=512):
    h, w = img.shape
    s = side / max(h, w)
    if s < 1: img = transform.resize(img, (round(h*s), round(w*s)), anti_aliasing=True)
    return img
def save(path, img):
    u8 = np.clip(np.round(img * 255), 0, 255).astype(np.uint8)
    h, w = u8.shape
    with open(path, 'wb') as f:
        f.write(b'P5\n%d %d\n255\n' % (w, h)); f.write(u8.tobytes())
    return h, w
total = 0
for name in ['astronaut','chelsea','coffee','rocket','stereo_motorcycle','gravel','retina','immunohistochemistry','hubble_deep_field','clock','cell']:
    h, w = save(f'train/{name}.pgm', fit(gray(src(name))))
    n = ((h-8)//4+1)*((w-8)//4+1); total += n; print(name, h, w, n)
print('train patches', total)
for name in ['camera','coins','moon','grass','brick']:
    img = gray(getattr(data, name)())
    h, w = img.shape
    y, x = (h-256)//2, (w-256)//2
    print(name, save(f'test/{name}.pgm', img[y:y+256, x:x+256]))

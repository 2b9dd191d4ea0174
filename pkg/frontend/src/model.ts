/**
 * Toy conditional VAE with an exactly linear decoder.
 *
 * A small convolutional conditioning network maps the grayscale image to
 * zero-code outputs (proximity D0, logits S0, uncertainty b) and to code
 * Jacobian tensors (Jd, Js). Predictions are then *linear* in the code:
 *
 *     proximity(c_d) = D0 + Jd c_d,      logits(c_s) = S0 + Js c_s,
 *
 * the heads are 1x1 convolutions at half resolution followed by nearest
 * upsampling, so the linearity is exact by construction. Two recognition
 * encoders (depth, semantics) produce code mean/log-variance for the
 * variational training objective; they are discarded at export time.
 *
 * Everything is built from pad/slice/concat + matmul ops: the generic
 * conv2d gradients in the pure-JS backend are an order of magnitude slower
 * than the equivalent im2col matmuls.
 */

import * as tf from "@tensorflow/tfjs";

export interface ModelConfig {
  codeSize: number;
  classCount: number;
  trunk: number; // trunk channel width
  encoder: number; // recognition-encoder channel width
  depthJacobianScale: number; // code leverage on proximity
  semanticJacobianScale: number; // code leverage on logits
}

export const DEFAULT_CONFIG: ModelConfig = {
  codeSize: 8,
  classCount: 6,
  trunk: 16,
  encoder: 12,
  // depth is mostly carried by the image-conditioned path, semantics lean
  // on the code; the leverage split reflects that
  depthJacobianScale: 0.1,
  semanticJacobianScale: 1.0,
};

/**
 * 3x3 "same" convolution with a hand-written gradient in which both
 * backward passes are conv2d *forward* kernels: dx is dy convolved with the
 * spatially flipped, channel-transposed filter, and dW is the batch-as-
 * channels correlation of the padded input with dy. The stock
 * conv2dDerInput/DerFilter kernels of the pure-JS backend are an order of
 * magnitude slower.
 */
const conv3x3Core = tf.customGrad(
  // @ts-expect-error tfjs customGrad typings do not model multi-input signatures
  (x: tf.Tensor4D, weight: tf.Tensor4D, save: (t: tf.Tensor[]) => void) => {
    save([x, weight]);
    const value = tf.conv2d(x, weight, 1, "same");
    const gradFunc = (dy: tf.Tensor4D, saved: tf.Tensor[]) => {
      const [savedX, savedW] = saved as [tf.Tensor4D, tf.Tensor4D];
      const flipped = tf.transpose(tf.reverse(savedW, [0, 1]), [0, 1, 3, 2]) as tf.Tensor4D;
      const dx = tf.conv2d(dy, flipped, 1, "same");
      const padded = tf.pad(savedX, [[0, 0], [1, 1], [1, 1], [0, 0]]) as tf.Tensor4D;
      const xAsBatch = tf.transpose(padded, [3, 1, 2, 0]) as tf.Tensor4D; // (ci, H+2, W+2, n)
      const dyAsFilter = tf.transpose(dy, [1, 2, 0, 3]) as tf.Tensor4D; // (H, W, n, co)
      const dwRaw = tf.conv2d(xAsBatch, dyAsFilter, 1, "valid"); // (ci, 3, 3, co)
      const dWeight = tf.transpose(dwRaw, [1, 2, 0, 3]);
      return [dx, dWeight];
    };
    return { value, gradFunc };
  },
);

function conv3x3(x: tf.Tensor4D, weight: tf.Tensor4D, bias: tf.Tensor1D): tf.Tensor4D {
  return (conv3x3Core(x, weight) as tf.Tensor4D).add(bias) as tf.Tensor4D;
}

function conv1x1(x: tf.Tensor4D, weight: tf.Tensor2D, bias: tf.Tensor1D): tf.Tensor4D {
  const [n, h, w, cin] = x.shape;
  const flat = x.reshape([n * h * w, cin]) as tf.Tensor2D;
  return tf.matMul(flat, weight).add(bias).reshape([n, h, w, weight.shape[1]]) as tf.Tensor4D;
}

/** Nearest-neighbor x2 upsampling via stack + reshape (cheap gradients). */
function up2(x: tf.Tensor4D): tf.Tensor4D {
  const [n, h, w, c] = x.shape;
  const rows = tf.stack([x, x], 2).reshape([n, 2 * h, w, c]) as tf.Tensor4D;
  return tf.stack([rows, rows], 3).reshape([n, 2 * h, 2 * w, c]) as tf.Tensor4D;
}

function down2(x: tf.Tensor4D): tf.Tensor4D {
  return tf.avgPool(x, 2, 2, "same");
}

export interface Conditioning {
  d0: tf.Tensor4D; // (N, H, W, 1) in (0, 1)
  jd: tf.Tensor4D; // (N, H, W, B)
  s0: tf.Tensor4D; // (N, H, W, C)
  js: tf.Tensor4D; // (N, H, W, C*B)
  uncertainty: tf.Tensor4D; // (N, H, W, 1) positive
}

export class ToyCvae {
  readonly config: ModelConfig;
  readonly vars: Map<string, tf.Variable>;

  private constructor(config: ModelConfig, vars: Map<string, tf.Variable>) {
    this.config = config;
    this.vars = vars;
  }

  private static instances = 0;

  static create(config: Partial<ModelConfig> = {}, seed = 0): ToyCvae {
    const cfg = { ...DEFAULT_CONFIG, ...config };
    const vars = new Map<string, tf.Variable>();
    let at = seed * 1000;
    const uid = ToyCvae.instances++;
    const add = (name: string, shape: number[], fanIn: number, biasSize: number) => {
      const std = Math.sqrt(2.0 / fanIn);
      // registered names must be globally unique; map keys stay logical
      vars.set(name, tf.variable(tf.randomNormal(shape, 0, std, "float32", at++), true, `m${uid}/${name}`));
      vars.set(`${name}.bias`, tf.variable(tf.zeros([biasSize]), true, `m${uid}/${name}.bias`));
    };
    const t = cfg.trunk;
    const e = cfg.encoder;
    const cb = cfg.classCount * cfg.codeSize;
    // conditioning trunk (runs at half resolution); conv weights are 4-D
    add("trunk1", [3, 3, 1, t], 9, t);
    add("trunk2", [3, 3, t, t], 9 * t, t);
    add("trunk3", [3, 3, t, t], 9 * t, t);
    // linear 1x1 heads (matmul weights)
    for (const [name, channels] of [
      ["head_d0", 1], ["head_jd", cfg.codeSize], ["head_s0", cfg.classCount],
      ["head_js", cb], ["head_unc", 1],
    ] as [string, number][]) {
      add(name, [t, channels], t, channels);
    }
    // recognition encoders: [target, image] -> (mu, logvar)
    for (const [prefix, cin] of [["enc_d", 2], ["enc_s", cfg.classCount + 1]] as [string, number][]) {
      add(`${prefix}1`, [3, 3, cin, e], 9 * cin, e);
      add(`${prefix}2`, [3, 3, e, e], 9 * e, e);
      add(`${prefix}_out`, [e, 2 * cfg.codeSize], e, 2 * cfg.codeSize);
    }
    return new ToyCvae(cfg, vars);
  }

  private w<T extends tf.Tensor>(name: string): T {
    return this.vars.get(name) as unknown as T;
  }

  private b(name: string): tf.Tensor1D {
    return this.vars.get(`${name}.bias`) as unknown as tf.Tensor1D;
  }

  trainables(): tf.Variable[] {
    return [...this.vars.values()];
  }

  /** Image-conditioned tensors of the linear decoder.
   *
   * The heads run at half resolution; ``fullRes`` upsamples them (nearest,
   * still linear in the code). Training supervises at head resolution for
   * speed, export and evaluation use the full-resolution tensors.
   */
  conditioning(images: tf.Tensor4D, fullRes = true): Conditioning {
    const cfg = this.config;
    let x = tf.relu(conv3x3(down2(images), this.w("trunk1"), this.b("trunk1")));
    x = tf.relu(conv3x3(x, this.w("trunk2"), this.b("trunk2")));
    x = tf.relu(conv3x3(x, this.w("trunk3"), this.b("trunk3")));
    const head = (name: string) => {
      const low = conv1x1(x, this.w(name), this.b(name));
      return fullRes ? up2(low) : low;
    };
    return {
      d0: tf.sigmoid(head("head_d0")) as tf.Tensor4D,
      jd: head("head_jd").mul(cfg.depthJacobianScale) as tf.Tensor4D,
      s0: head("head_s0") as tf.Tensor4D,
      js: head("head_js").mul(cfg.semanticJacobianScale) as tf.Tensor4D,
      uncertainty: tf.softplus(head("head_unc")).add(0.01) as tf.Tensor4D,
    };
  }

  /** D0 + Jd c, exactly linear in the code. */
  decodeDepth(cond: Conditioning, codes: tf.Tensor2D): tf.Tensor4D {
    const [n, h, w] = [cond.d0.shape[0], cond.d0.shape[1], cond.d0.shape[2]];
    const b = this.config.codeSize;
    const contrib = tf.matMul(cond.jd.reshape([n, h * w, b]), codes.reshape([n, b, 1]));
    return cond.d0.add(contrib.reshape([n, h, w, 1])) as tf.Tensor4D;
  }

  /** S0 + Js c, exactly linear in the code; output (N, H, W, C). */
  decodeSemantics(cond: Conditioning, codes: tf.Tensor2D): tf.Tensor4D {
    const [n, h, w] = [cond.s0.shape[0], cond.s0.shape[1], cond.s0.shape[2]];
    const { classCount, codeSize } = this.config;
    const js = cond.js.reshape([n, h * w * classCount, codeSize]);
    const contrib = tf.matMul(js, codes.reshape([n, codeSize, 1]));
    return cond.s0.add(contrib.reshape([n, h, w, classCount])) as tf.Tensor4D;
  }

  private encode(prefix: string, x: tf.Tensor4D): { mu: tf.Tensor2D; logvar: tf.Tensor2D } {
    let h = tf.relu(conv3x3(down2(x), this.w(`${prefix}1`), this.b(`${prefix}1`)));
    h = tf.relu(conv3x3(down2(h), this.w(`${prefix}2`), this.b(`${prefix}2`)));
    const pooled = h.mean([1, 2]) as tf.Tensor2D; // global average pool
    const out = tf.matMul(pooled, this.w(`${prefix}_out`)).add(this.b(`${prefix}_out`)) as tf.Tensor2D;
    const [mu, logvar] = tf.split(out, 2, 1) as [tf.Tensor2D, tf.Tensor2D];
    return { mu, logvar };
  }

  encodeDepth(proximity: tf.Tensor4D, images: tf.Tensor4D) {
    return this.encode("enc_d", tf.concat([proximity, images], 3) as tf.Tensor4D);
  }

  encodeSemantics(oneHot: tf.Tensor4D, images: tf.Tensor4D) {
    return this.encode("enc_s", tf.concat([oneHot, images], 3) as tf.Tensor4D);
  }

  saveJson(): string {
    const payload: Record<string, { shape: number[]; data: string }> = {};
    for (const [name, variable] of this.vars) {
      const data = variable.dataSync() as Float32Array;
      payload[name] = {
        shape: variable.shape.slice(),
        data: Buffer.from(data.buffer, data.byteOffset, data.byteLength).toString("base64"),
      };
    }
    return JSON.stringify({ config: this.config, weights: payload });
  }

  static loadJson(text: string): ToyCvae {
    const parsed = JSON.parse(text);
    const model = ToyCvae.create(parsed.config as ModelConfig, 0);
    for (const [name, entry] of Object.entries(parsed.weights as Record<string, { shape: number[]; data: string }>)) {
      const variable = model.vars.get(name);
      if (!variable) throw new Error(`unknown weight ${name} in checkpoint`);
      const raw = Buffer.from(entry.data, "base64");
      const values = new Float32Array(raw.buffer, raw.byteOffset, raw.byteLength / 4);
      variable.assign(tf.tensor(Array.from(values), entry.shape));
    }
    return model;
  }
}

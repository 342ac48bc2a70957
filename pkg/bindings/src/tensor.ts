/**
 * Reader/writer for the binary tensor container used by the codec CLI.
 *
 * Layout: magic "CTMP" | version u8 | dtype u8 (0 = float32, 1 = uint8) |
 * ndim u8 | ndim x u32 LE dims | tightly packed row-major LE payload.
 *
 * Reads are zero-copy on the payload: the file body is read at its offset
 * into a fresh aligned allocation and the typed array is a view over it.
 */

import { closeSync, openSync, readSync, fstatSync, writeFileSync } from 'node:fs'

export const MAGIC = 'CTMP'
export const VERSION = 1

export type Dtype = 'float32' | 'uint8'

export interface Tensor {
  dtype: Dtype
  shape: number[]
  data: Float32Array | Uint8Array
}

export class TensorFormatError extends Error {}

const DTYPE_BY_CODE: Record<number, Dtype> = { 0: 'float32', 1: 'uint8' }
const CODE_BY_DTYPE: Record<Dtype, number> = { float32: 0, uint8: 1 }
const ITEM_SIZE: Record<Dtype, number> = { float32: 4, uint8: 1 }

export function tensorElements(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1)
}

export function readTensor(path: string): Tensor {
  const fd = openSync(path, 'r')
  try {
    const fileSize = fstatSync(fd).size
    const head = Buffer.alloc(7)
    if (fileSize < 4 || readSync(fd, head, 0, Math.min(7, fileSize), 0) < 4) {
      throw new TensorFormatError(`${path}: file too short for a tensor header`)
    }
    if (head.toString('latin1', 0, 4) !== MAGIC) {
      throw new TensorFormatError(`${path}: bad magic`)
    }
    if (fileSize < 7) throw new TensorFormatError(`${path}: truncated header`)
    const version = head.readUInt8(4)
    const code = head.readUInt8(5)
    const ndim = head.readUInt8(6)
    if (version !== VERSION) {
      throw new TensorFormatError(`${path}: unsupported version ${version}`)
    }
    const dtype = DTYPE_BY_CODE[code]
    if (dtype === undefined) {
      throw new TensorFormatError(`${path}: unknown dtype code ${code}`)
    }
    const dimsBuf = Buffer.alloc(4 * ndim)
    if (readSync(fd, dimsBuf, 0, dimsBuf.length, 7) !== dimsBuf.length) {
      throw new TensorFormatError(`${path}: truncated header`)
    }
    const shape: number[] = []
    for (let i = 0; i < ndim; i++) shape.push(dimsBuf.readUInt32LE(4 * i))

    const headerLen = 7 + 4 * ndim
    const byteLen = tensorElements(shape) * ITEM_SIZE[dtype]
    if (fileSize - headerLen !== byteLen) {
      throw new TensorFormatError(
        `${path}: payload is ${fileSize - headerLen} bytes, expected ${byteLen}`,
      )
    }
    // Buffer.alloc returns an unpooled, 8-byte aligned allocation, so the
    // typed array below is a view, not a copy.
    const payload = Buffer.alloc(byteLen)
    if (readSync(fd, payload, 0, byteLen, headerLen) !== byteLen) {
      throw new TensorFormatError(`${path}: short read`)
    }
    const data =
      dtype === 'float32'
        ? new Float32Array(payload.buffer, payload.byteOffset, byteLen / 4)
        : new Uint8Array(payload.buffer, payload.byteOffset, byteLen)
    return { dtype, shape, data }
  } finally {
    closeSync(fd)
  }
}

export function writeTensor(path: string, tensor: Tensor): void {
  const { dtype, shape, data } = tensor
  const expected = tensorElements(shape)
  if (data.length !== expected) {
    throw new TensorFormatError(
      `tensor data has ${data.length} elements, shape wants ${expected}`,
    )
  }
  const header = Buffer.alloc(7 + 4 * shape.length)
  header.write(MAGIC, 0, 'latin1')
  header.writeUInt8(VERSION, 4)
  header.writeUInt8(CODE_BY_DTYPE[dtype], 5)
  header.writeUInt8(shape.length, 6)
  shape.forEach((dim, i) => header.writeUInt32LE(dim, 7 + 4 * i))
  const payload = Buffer.from(data.buffer, data.byteOffset, data.byteLength)
  writeFileSync(path, Buffer.concat([header, payload]))
}
